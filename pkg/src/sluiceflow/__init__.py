"""sluiceflow: joint detection of infected clients and malicious domains
from encrypted-traffic flow logs."""

from .flowstore import (
    EntityKind,
    FlowRecord,
    FlowWindow,
    InstanceKey,
    Label,
    bucket_instances,
    build_windows,
    parse_flow_log,
)
from .featurize import Alphabet, encode_domain, featurize_window, numeric_features
from .sluicemodel import DomainCnnConfig, ModelMode, SluiceModel, build_model
from .trainer import TrainConfig, WindowDataset, train, train_restarts
from .aggregate import EntityScore, flag, score_entities
from .evalkit import CurveReport, eval_by_group, metric_at, pr_curve, roc_curve, welch_t
from .synthgen import GroundTruth, SynthConfig, generate, transfer_benchmark

__version__ = "0.1.0"
