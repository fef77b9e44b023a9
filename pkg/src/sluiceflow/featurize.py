"""Model input features: numeric per-flow vectors and one-hot domain encodings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flowstore import FlowRecord, FlowWindow

DOMAIN_LENGTH = 40
GAP_CAP = 86400.0
N_NUMERIC = 5


@dataclass(frozen=True)
class Alphabet:
    """Ordered character set for domain-name encoding; last symbol is OTHER."""

    symbols: str = "abcdefghijklmnopqrstuvwxyz0123456789-._"

    @property
    def size(self) -> int:
        return len(self.symbols) + 1  # + OTHER column

    @property
    def other_index(self) -> int:
        return len(self.symbols)

    def index_of(self, char: str) -> int:
        i = self.symbols.find(char)
        return i if i >= 0 else self.other_index

    def indices(self, domain: str) -> np.ndarray:
        """Right-aligned symbol indices of the last 40 characters; -1 = padding."""
        out = np.full(DOMAIN_LENGTH, -1, dtype=np.int16)
        tail = domain.lower()[-DOMAIN_LENGTH:]
        for pos, char in enumerate(tail):
            out[DOMAIN_LENGTH - len(tail) + pos] = self.index_of(char)
        return out


DEFAULT_ALPHABET = Alphabet()


def encode_domain(domain: str, alphabet: Alphabet = DEFAULT_ALPHABET) -> np.ndarray:
    """One-hot encode the last 40 characters of a domain name, right-aligned.

    Returns a (40, alphabet.size) matrix; rows before the name starts are
    all-zero padding.  Characters outside the alphabet map to OTHER.
    """
    idx = alphabet.indices(domain)
    onehot = np.zeros((DOMAIN_LENGTH, alphabet.size))
    valid = idx >= 0
    onehot[np.nonzero(valid)[0], idx[valid]] = 1.0
    return onehot


def flow_numeric_features(flow: FlowRecord, gap: float) -> np.ndarray:
    """The 5 numeric features of one flow, given its gap to the preceding flow."""
    gap = min(max(gap, 0.0), GAP_CAP)
    return np.array(
        [
            np.log1p(flow.duration),
            np.log1p(flow.bytes_sent),
            np.log1p(flow.bytes_received),
            flow.duration,
            gap,
        ]
    )


def numeric_features(window: FlowWindow) -> np.ndarray:
    """Per-slot numeric feature matrix (2k+1) x 5; padding rows are zero.

    The gap feature of slot i is the time from the previous non-pad slot; the
    client's first flow gets gap 0.  For the leftmost non-pad slot the true
    predecessor is outside the window, so its gap falls back to 0 as well.
    """
    size = len(window.flows)
    out = np.zeros((size, N_NUMERIC))
    prev_ts = None
    for i, flow in enumerate(window.flows):
        if flow is None:
            continue
        gap = flow.ts_start - prev_ts if prev_ts is not None else 0.0
        out[i] = flow_numeric_features(flow, gap)
        prev_ts = flow.ts_start
    return out


def featurize_window(
    window: FlowWindow, alphabet: Alphabet = DEFAULT_ALPHABET
) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-slot domain encodings and numeric features.

    Returns (domains, numerics) of shapes (2k+1, 40, A) and (2k+1, 5);
    padding slots contribute all-zero blocks.
    """
    size = len(window.flows)
    domains = np.zeros((size, DOMAIN_LENGTH, alphabet.size))
    for i, flow in enumerate(window.flows):
        if flow is not None:
            domains[i] = encode_domain(flow.domain, alphabet)
    return domains, numeric_features(window)


class FeatureStandardizer:
    """Optional per-feature affine standardization fitted on training data.

    Off by default in the pipeline; when used, padding rows stay zero because
    the transform is only applied to non-pad slots.
    """

    def __init__(self):
        self.mean: np.ndarray | None = None
        self.scale: np.ndarray | None = None

    def fit(self, features: np.ndarray) -> "FeatureStandardizer":
        self.mean = features.mean(axis=0)
        std = features.std(axis=0)
        self.scale = np.where(std > 0, std, 1.0)
        return self

    def transform(self, features: np.ndarray) -> np.ndarray:
        if self.mean is None or self.scale is None:
            raise RuntimeError("standardizer not fitted")
        return (features - self.mean) / self.scale


def flow_feature_table(
    flows, alphabet: Alphabet = DEFAULT_ALPHABET
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Compact per-flow features for batched training.

    Returns (char_indices, numerics, ts): (n, 40) int16 with -1 padding,
    (n, 5) float64 with the gap column left at 0, and (n,) start times.
    Batch assembly fills the gap column from within-window ts differences, so
    materialized slots equal numeric_features of the same window exactly.
    """
    char_idx = np.stack([alphabet.indices(f.domain) for f in flows])
    numerics = np.stack([flow_numeric_features(f, 0.0) for f in flows])
    ts = np.array([f.ts_start for f in flows])
    return char_idx, numerics, ts
