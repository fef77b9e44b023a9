"""4-NN soft-histogram baseline for malicious-domain detection.

Per domain-day instance: a soft 2-D histogram over (log inter-arrival time,
log transfer volume) concatenated with engineered domain-name features,
classified by exact Euclidean k-nearest-neighbor vote.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .flowstore import FlowRecord

FEATURE_SET_VERSION = "histknn-features-v1"

H_T = 16  # inter-arrival time bins, log-spaced over [1 ms, 1 day]
H_V = 16  # byte-volume bins, log-spaced over [1 B, 1 GB]
_T_CENTERS = np.log(np.logspace(np.log10(1e-3), np.log10(86400.0), H_T))
_V_CENTERS = np.log(np.logspace(np.log10(1.0), np.log10(1e9), H_V))

ENGINEERED_FEATURE_NAMES = [
    "length",
    "digit_ratio",
    "vowel_ratio",
    "char_entropy",
    "n_labels",
    "longest_label",
    "hyphen_count",
    "is_ip_form",
]

_IP_RE = re.compile(r"^\d{1,3}(\.\d{1,3}){3}$")


def _axis_weights(value: float, centers: np.ndarray) -> tuple[int, int, float, float]:
    """Triangular-kernel split of one observation over its two nearest centers."""
    if value <= centers[0]:
        return 0, 0, 1.0, 0.0
    if value >= centers[-1]:
        return len(centers) - 1, len(centers) - 1, 1.0, 0.0
    hi = int(np.searchsorted(centers, value))
    lo = hi - 1
    frac = (value - centers[lo]) / (centers[hi] - centers[lo])
    return lo, hi, 1.0 - frac, frac


def soft_histogram(flows: Sequence[FlowRecord], bins_t: int = H_T, bins_v: int = H_V) -> np.ndarray:
    """Normalized soft 2-D histogram of one domain instance's flows.

    Each (inter-arrival gap, total bytes) observation spreads triangular-kernel
    mass over the four surrounding cells.  With a single flow there is no gap
    observation, so the time axis is uniform and only volume structure remains.
    """
    if not flows:
        raise ValueError("soft_histogram requires at least one flow")
    t_centers = _T_CENTERS if bins_t == H_T else np.log(
        np.logspace(np.log10(1e-3), np.log10(86400.0), bins_t)
    )
    v_centers = _V_CENTERS if bins_v == H_V else np.log(
        np.logspace(np.log10(1.0), np.log10(1e9), bins_v)
    )
    ordered = sorted(flows, key=lambda f: f.ts_start)
    volumes = [f.bytes_sent + f.bytes_received for f in ordered]
    gaps = [
        max(b.ts_start - a.ts_start, 0.0) for a, b in zip(ordered, ordered[1:])
    ]
    grid = np.zeros((bins_t, bins_v))
    if gaps:
        for gap, vol in zip(gaps, volumes[1:]):
            log_gap = math.log(max(gap, 1e-3))
            log_vol = math.log(max(vol, 1.0))
            t_lo, t_hi, wt_lo, wt_hi = _axis_weights(log_gap, t_centers)
            v_lo, v_hi, wv_lo, wv_hi = _axis_weights(log_vol, v_centers)
            grid[t_lo, v_lo] += wt_lo * wv_lo
            grid[t_lo, v_hi] += wt_lo * wv_hi
            grid[t_hi, v_lo] += wt_hi * wv_lo
            grid[t_hi, v_hi] += wt_hi * wv_hi
    else:
        # single flow: uniform over the time axis, volume marginal only
        log_vol = math.log(max(volumes[0], 1.0))
        v_lo, v_hi, wv_lo, wv_hi = _axis_weights(log_vol, v_centers)
        grid[:, v_lo] += wv_lo / bins_t
        grid[:, v_hi] += wv_hi / bins_t
    total = grid.sum()
    if total > 0:
        grid /= total
    return grid


def engineered_domain_features(domain: str) -> np.ndarray:
    """Fixed lexical feature vector of a domain string (see feature names).

    The empty string maps to the all-zero vector.
    """
    if not domain:
        return np.zeros(len(ENGINEERED_FEATURE_NAMES))
    name = domain.lower()
    counts: dict[str, int] = {}
    for ch in name:
        counts[ch] = counts.get(ch, 0) + 1
    freqs = np.array(list(counts.values()), dtype=float) / len(name)
    entropy = float(-(freqs * np.log2(freqs)).sum())
    labels = name.split(".")
    return np.array(
        [
            len(name),
            sum(ch.isdigit() for ch in name) / len(name),
            sum(ch in "aeiou" for ch in name) / len(name),
            entropy,
            len(labels),
            max(len(lab) for lab in labels),
            name.count("-"),
            1.0 if _IP_RE.match(name) else 0.0,
        ]
    )


def domain_feature_vector(domain: str, flows: Sequence[FlowRecord]) -> np.ndarray:
    """Soft histogram (flattened) concatenated with engineered name features."""
    return np.concatenate(
        [soft_histogram(flows).ravel(), engineered_domain_features(domain)]
    )


@dataclass
class Standardizer:
    """Per-dimension standardization fitted on training vectors only."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, matrix: np.ndarray) -> "Standardizer":
        std = matrix.std(axis=0)
        return cls(mean=matrix.mean(axis=0), scale=np.where(std > 0, std, 1.0))

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        return (matrix - self.mean) / self.scale


def knn_classify(
    train_vectors: np.ndarray,
    train_labels: np.ndarray,
    query: np.ndarray,
    k: int = 4,
) -> float:
    """Exact Euclidean k-NN vote: fraction of malicious neighbors.

    Distance ties are broken by lower training index.
    """
    if len(train_vectors) == 0:
        raise ValueError("empty training set")
    if k > len(train_vectors):
        raise ValueError(f"k={k} exceeds training set size {len(train_vectors)}")
    dists = np.linalg.norm(train_vectors - query, axis=1)
    order = np.lexsort((np.arange(len(dists)), dists))
    neighbors = order[:k]
    return float(np.mean(train_labels[neighbors] == 1))


def knn_scores(
    train_vectors: np.ndarray,
    train_labels: np.ndarray,
    queries: np.ndarray,
    k: int = 4,
) -> np.ndarray:
    return np.array(
        [knn_classify(train_vectors, train_labels, q, k) for q in queries]
    )
