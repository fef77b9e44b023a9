"""Mini-batch training: dataset assembly, class balancing, epoch loop, restarts."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .featurize import (
    Alphabet,
    DEFAULT_ALPHABET,
    DOMAIN_LENGTH,
    GAP_CAP,
    N_NUMERIC,
    flow_feature_table,
)
from .flowstore import FlowRecord, Label, _client_order
from .nncore import AdamState, SGDState
from .sluicemodel import SluiceModel

_LABEL_TO_INT = {Label.BENIGN: 0, Label.MALICIOUS: 1, Label.UNLABELED: -1}


class WindowDataset:
    """Featurized flow windows in compact form, materialized per batch.

    Stores per-flow character indices and numeric features once; each window
    is a row of flow indices (-1 = padding slot).  Labels are taken from the
    center flow: 0 benign, 1 malicious, -1 unlabeled.
    """

    def __init__(
        self,
        flows: Sequence[FlowRecord],
        k: int,
        alphabet: Alphabet = DEFAULT_ALPHABET,
        causal: bool = False,
    ):
        self.flows = list(flows)
        self.k = k
        self.alphabet = alphabet
        self.char_idx, self.numeric, self.ts = flow_feature_table(flows, alphabet)
        self.window_slots = _window_slot_indices(flows, k, causal)
        self.labels = {
            "client": np.array(
                [_LABEL_TO_INT[f.flow_label] for f in flows], dtype=np.int64
            ),
            "domain": np.array(
                [_LABEL_TO_INT[f.domain_label] for f in flows], dtype=np.int64
            ),
        }

    def __len__(self) -> int:
        return len(self.flows)

    def materialize(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Build (onehot, numeric) batch tensors for the given window indices."""
        slots = self.window_slots[indices]  # (b, S)
        b, slot_count = slots.shape
        valid = slots >= 0
        onehot = np.zeros((b, slot_count, DOMAIN_LENGTH, self.alphabet.size))
        b_idx, s_idx = np.nonzero(valid)
        if b_idx.size:
            ci = self.char_idx[slots[b_idx, s_idx]]  # (m, 40)
            mm, pp = np.nonzero(ci >= 0)
            onehot[b_idx[mm], s_idx[mm], pp, ci[mm, pp]] = 1.0

        numeric = np.zeros((b, slot_count, N_NUMERIC))
        if b_idx.size:
            numeric[b_idx, s_idx] = self.numeric[slots[b_idx, s_idx]]
        # gap feature: ts difference between consecutive non-pad slots,
        # 0 for the leftmost non-pad slot (predecessor outside the window)
        ts = np.where(valid, self.ts[np.clip(slots, 0, None)], np.nan)
        gaps = np.zeros((b, slot_count))
        gaps[:, 1:] = ts[:, 1:] - ts[:, :-1]
        gaps = np.clip(np.nan_to_num(gaps, nan=0.0), 0.0, GAP_CAP)
        numeric[:, :, 4] = np.where(valid, gaps, 0.0)
        return onehot, numeric


def _window_slot_indices(flows, k, causal) -> np.ndarray:
    slot_count = 2 * k + 1
    out = np.full((len(flows), slot_count), -1, dtype=np.int64)
    for indices in _client_order(flows).values():
        for pos, i in enumerate(indices):
            for s, offset in enumerate(range(-k, k + 1)):
                j = pos + offset
                if 0 <= j < len(indices) and not (causal and offset > 0):
                    out[i, s] = indices[j]
    return out


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 256
    learning_rate: float = 1e-3
    balance: str = "weighted_loss"  # none | weighted_loss | downsample_negatives
    downsample_ratio: float = 1.0
    seed: int = 0
    restarts: int = 1
    task_weights: dict = field(default_factory=lambda: {"client": 1.0, "domain": 1.0})
    optimizer: str = "adam"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.restarts < 1:
            raise ValueError("epochs, batch_size, and restarts must be >= 1")
        if self.balance not in ("none", "weighted_loss", "downsample_negatives"):
            raise ValueError(f"unknown balance strategy {self.balance!r}")


def class_weights(labels: np.ndarray) -> np.ndarray:
    """Per-sample weights inversely proportional to class frequency.

    Unlabeled samples (-1) get weight 0.  Weights are scaled so the labeled
    samples' mean weight is 1.
    """
    labeled = labels >= 0
    n = int(labeled.sum())
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0:
        raise ValueError("weighted_loss balancing requires at least one positive")
    weights = np.zeros(len(labels))
    weights[labels == 1] = n / (2.0 * n_pos)
    weights[labels == 0] = n / (2.0 * n_neg) if n_neg else 0.0
    return weights


def make_batches(
    n_items: int,
    labels: dict[str, np.ndarray],
    cfg: TrainConfig,
    epoch_seed: int,
    tasks: Sequence[str] = ("client", "domain"),
) -> list[np.ndarray]:
    """Deterministically shuffled batch index arrays for one epoch.

    With downsampling, every positive of every task is kept and negatives are
    subsampled to ``ratio * n_positives``.
    """
    rng = np.random.default_rng(epoch_seed)
    if cfg.balance == "downsample_negatives":
        positive = np.zeros(n_items, dtype=bool)
        for task in tasks:
            positive |= labels[task] == 1
        pos_idx = np.nonzero(positive)[0]
        neg_idx = np.nonzero(~positive)[0]
        n_keep = min(len(neg_idx), int(round(cfg.downsample_ratio * len(pos_idx))))
        kept_neg = rng.choice(neg_idx, size=n_keep, replace=False) if n_keep else neg_idx[:0]
        pool = np.concatenate([pos_idx, kept_neg])
    else:
        pool = np.arange(n_items)
    order = rng.permutation(pool)
    return [
        order[start : start + cfg.batch_size]
        for start in range(0, len(order), cfg.batch_size)
    ]


def train(
    model: SluiceModel,
    dataset: WindowDataset,
    cfg: TrainConfig,
    checkpoint_fn: Callable[[int, SluiceModel], None] | None = None,
) -> tuple[SluiceModel, list[dict]]:
    """Train in place; returns the model and a per-batch loss trace.

    Fully deterministic given (cfg.seed, dataset, model initial state).
    Aborts with a diagnostic on non-finite loss.
    """
    tasks = model.mode.active_tasks
    if cfg.optimizer == "adam":
        opt = AdamState(lr=cfg.learning_rate)
    elif cfg.optimizer == "sgd":
        opt = SGDState(lr=cfg.learning_rate)
    else:
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")

    sample_weights = None
    if cfg.balance == "weighted_loss":
        sample_weights = {task: class_weights(dataset.labels[task]) for task in tasks}

    trace: list[dict] = []
    for epoch in range(cfg.epochs):
        batches = make_batches(
            len(dataset), dataset.labels, cfg, epoch_seed=cfg.seed + 1000 * epoch,
            tasks=tasks,
        )
        for b, idx in enumerate(batches):
            onehot, numeric = dataset.materialize(idx)
            labels = {task: dataset.labels[task][idx] for task in tasks}
            weights = (
                {task: sample_weights[task][idx] for task in tasks}
                if sample_weights is not None
                else None
            )
            model.zero_grads()
            loss, probs = model.forward_loss(
                onehot,
                numeric,
                labels,
                task_weights=cfg.task_weights,
                sample_weights=weights,
            )
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch} batch {b} "
                    f"(lr={cfg.learning_rate})"
                )
            task_losses = _task_losses(probs, labels, weights)
            opt.step(model.params(), model.grads())
            row = {"epoch": epoch, "batch": b, "total": loss}
            row.update({f"loss_{task}": task_losses[task] for task in tasks})
            trace.append(row)
        if checkpoint_fn is not None:
            checkpoint_fn(epoch, model)
    return model, trace


def _task_losses(probs, labels, weights) -> dict[str, float]:
    out = {}
    for task, p in probs.items():
        y = labels[task]
        w = np.ones(len(y)) if weights is None else weights[task]
        w = np.where(y >= 0, w, 0.0)
        safe_y = np.where(y >= 0, y, 0)
        picked = np.clip(p[np.arange(len(y)), safe_y], 1e-300, None)
        out[task] = float(-(w * np.log(picked)).sum() / len(y))
    return out


@dataclass
class RestartBundle:
    """Trained models from independent random restarts."""

    models: list[SluiceModel]
    seeds: list[int]
    traces: list[list[dict]]


def train_restarts(
    model_builder: Callable[[int], SluiceModel],
    dataset: WindowDataset,
    cfg: TrainConfig,
) -> RestartBundle:
    """Train cfg.restarts models with seeds cfg.seed + 0 .. restarts - 1."""
    models, seeds, traces = [], [], []
    for r in range(cfg.restarts):
        seed = cfg.seed + r
        model = model_builder(seed)
        run_cfg = replace(cfg, seed=seed, restarts=1)
        model, trace = train(model, dataset, run_cfg)
        models.append(model)
        seeds.append(seed)
        traces.append(trace)
    return RestartBundle(models=models, seeds=seeds, traces=traces)


def split_train_val(
    labels: np.ndarray, fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified holdout split; returns (train_idx, val_idx).

    Stratifies on the given label array (-1 treated as its own stratum).
    """
    rng = np.random.default_rng(seed)
    train_parts, val_parts = [], []
    for value in np.unique(labels):
        idx = rng.permutation(np.nonzero(labels == value)[0])
        n_val = int(round(fraction * len(idx)))
        val_parts.append(idx[:n_val])
        train_parts.append(idx[n_val:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(val_parts))


def write_loss_trace(path, trace: list[dict]) -> None:
    """Write the per-batch loss trace as CSV."""
    fields = ["epoch", "batch", "loss_client", "loss_domain", "total"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, restval="")
        writer.writeheader()
        for row in trace:
            writer.writerow({k: row.get(k, "") for k in fields})
