"""Daily entity verdicts by max-pooling flow scores, plus alert thresholds."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .flowstore import EntityKind, FlowRecord, InstanceKey, bucket_instances
from .sluicemodel import SluiceModel
from .trainer import WindowDataset


@dataclass(frozen=True)
class EntityScore:
    """One daily client/domain instance: max flow score and its witness flow."""

    key: InstanceKey
    score: float
    n_flows: int
    argmax_flow: int  # index into the scored flow sequence


def score_flows(
    model: SluiceModel, flows: Sequence[FlowRecord], task: str, batch_size: int = 512
) -> np.ndarray:
    """Positive-class probability per flow for one task, in input order."""
    dataset = WindowDataset(flows, k=model.k, alphabet=model.alphabet)
    scores = np.zeros(len(flows))
    for start in range(0, len(flows), batch_size):
        idx = np.arange(start, min(start + batch_size, len(flows)))
        onehot, numeric = dataset.materialize(idx)
        scores[idx] = model.predict(onehot, numeric)[task]
    return scores


def entity_scores_from_flow_scores(
    flows: Sequence[FlowRecord], flow_scores: np.ndarray, kind: EntityKind
) -> list[EntityScore]:
    """Max-pool flow scores into daily instance scores for one entity kind."""
    out = []
    for key, indices in bucket_instances(flows).items():
        if key.kind != kind:
            continue
        best = max(indices, key=lambda i: (flow_scores[i], -i))
        out.append(
            EntityScore(
                key=key,
                score=float(flow_scores[best]),
                n_flows=len(indices),
                argmax_flow=best,
            )
        )
    return out


def score_entities(
    model: SluiceModel, flows: Sequence[FlowRecord], kind: EntityKind
) -> list[EntityScore]:
    """Daily instance scores for all entities of the requested kind.

    The client task scores client instances; the domain task scores domain
    instances.
    """
    task = "client" if kind == EntityKind.CLIENT else "domain"
    if task not in model.mode.active_tasks:
        raise ValueError(f"model mode {model.mode.value} has no {task} task")
    flow_scores = score_flows(model, flows, task)
    return entity_scores_from_flow_scores(flows, flow_scores, kind)


def flag(scores: Sequence[EntityScore], threshold: float) -> list[EntityScore]:
    """Instances whose score strictly exceeds the threshold, best first."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    hits = [s for s in scores if s.score > threshold]
    return sorted(hits, key=lambda s: (-s.score, s.key))


def write_verdicts(path, scores: Sequence[EntityScore], flows: Sequence[FlowRecord]) -> None:
    """Write instance verdicts as CSV with the argmax flow as audit trail."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["kind", "entity", "day", "score", "n_flows", "argmax_ts", "argmax_domain"]
        )
        for s in sorted(scores, key=lambda s: s.key):
            witness = flows[s.argmax_flow]
            writer.writerow(
                [
                    s.key.kind.value,
                    s.key.entity,
                    s.key.day,
                    f"{s.score:.10f}",
                    s.n_flows,
                    f"{witness.ts_start:.3f}",
                    witness.domain,
                ]
            )
