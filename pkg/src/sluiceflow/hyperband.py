"""Hyperband hyperparameter search with successive halving, budgeted in epochs."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class SearchSpace:
    """Sampling ranges for the model hyperparameters.

    Power-of-two parameters are sampled log-uniformly over exponents; the
    window size is uniform over its integer range.
    """

    embedding_size: tuple[int, int] = (5, 7)  # exponents of 2
    kernel_width: tuple[int, int] = (2, 16)  # plain integer range
    n_filters: tuple[int, int] = (1, 9)  # exponents of 2 (2 .. 2^9)
    cnn_dense_units: tuple[int, int] = (5, 9)  # exponents of 2
    dense_units: tuple[int, int] = (5, 11)  # exponents of 2
    window_size: tuple[int, int] = (1, 15)  # odd sizes 2k+1 are enforced


def sample_config(space: SearchSpace, seed: int) -> dict:
    """Deterministic configuration sample from the search space."""
    rng = np.random.default_rng(seed)

    def pow2(lo_hi):
        return int(2 ** rng.integers(lo_hi[0], lo_hi[1] + 1))

    window = int(rng.integers(space.window_size[0], space.window_size[1] + 1))
    if window % 2 == 0:
        window += 1  # windows are 2k+1 flows
    return {
        "embedding_size": pow2(space.embedding_size),
        "kernel_width": int(
            rng.integers(space.kernel_width[0], space.kernel_width[1] + 1)
        ),
        "n_filters": pow2(space.n_filters),
        "cnn_dense_units": pow2(space.cnn_dense_units),
        "dense_units": pow2(space.dense_units),
        "window_size": window,
    }


@dataclass(frozen=True)
class Bracket:
    s: int
    n_configs: int
    resource: int


@dataclass(frozen=True)
class BracketPlan:
    R: int
    eta: int
    s_max: int
    brackets: tuple[Bracket, ...]


def plan_brackets(R: int, eta: int = 3) -> BracketPlan:
    """Bracket schedule: s_max = floor(log_eta R); bracket s starts with
    n_s = ceil(((s_max+1)/(s+1)) * eta^s) configs at r_s = R * eta^-s epochs.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    if eta < 2:
        raise ValueError("eta must be >= 2")
    s_max = int(math.floor(math.log(R) / math.log(eta)))
    brackets = []
    for s in range(s_max, -1, -1):
        n = int(math.ceil((s_max + 1) / (s + 1) * eta**s))
        r = max(1, int(R * eta ** (-s)))
        brackets.append(Bracket(s=s, n_configs=n, resource=r))
    return BracketPlan(R=R, eta=eta, s_max=s_max, brackets=tuple(brackets))


@dataclass
class TraceEntry:
    bracket: int
    round: int
    config_index: int
    config: dict
    epochs: int
    score: float
    kept: bool


def successive_halving(
    configs: list[dict],
    bracket: Bracket,
    evaluator: Callable[[dict, int], float],
    eta: int,
    R: int,
    trace: list[TraceEntry] | None = None,
) -> tuple[dict, float]:
    """Run one bracket: keep the top 1/eta by score each round, eta-fold the
    resource, until one survivor remains or the per-config budget R is hit.

    Score ties keep the lower config index.  A failing evaluator marks the
    config with score -inf and the search continues.
    """
    if not configs:
        raise ValueError("successive_halving needs at least one config")
    alive = list(range(len(configs)))
    resource = bracket.resource
    best_idx, best_score = alive[0], -np.inf
    for rnd in range(bracket.s + 1):
        scores = {}
        for i in alive:
            try:
                scores[i] = float(evaluator(configs[i], resource))
            except Exception:
                scores[i] = -np.inf
            if trace is not None:
                trace.append(
                    TraceEntry(
                        bracket=bracket.s,
                        round=rnd,
                        config_index=i,
                        config=configs[i],
                        epochs=resource,
                        score=scores[i],
                        kept=False,
                    )
                )
        ranked = sorted(alive, key=lambda i: (-scores[i], i))
        # scores at different resources are not comparable; the answer is the
        # top config of the final (highest-resource) round
        best_idx, best_score = ranked[0], scores[ranked[0]]
        last_round = rnd == bracket.s or len(alive) == 1
        alive = ranked[:1] if last_round else ranked[: max(1, len(alive) // eta)]
        if trace is not None:
            kept_set = set(alive)
            for entry in trace[-len(scores):]:
                entry.kept = entry.config_index in kept_set
        if last_round:
            break
        resource = min(R, resource * eta)
    return configs[best_idx], best_score


def hyperband_search(
    space: SearchSpace,
    evaluator: Callable[[dict, int], float],
    R: int = 27,
    eta: int = 3,
    seed: int = 0,
    trace_path=None,
) -> tuple[dict, float, list[TraceEntry]]:
    """Full hyperband: run every bracket of the plan, return the best config."""
    plan = plan_brackets(R, eta)
    trace: list[TraceEntry] = []
    best_config, best_score = None, -np.inf
    config_seed = seed
    for bracket in plan.brackets:
        configs = []
        for _ in range(bracket.n_configs):
            configs.append(sample_config(space, config_seed))
            config_seed += 1
        cfg, score = successive_halving(configs, bracket, evaluator, eta, R, trace)
        if score > best_score:
            best_config, best_score = cfg, score
    if trace_path is not None:
        write_trace(trace_path, trace, R=R, eta=eta, seed=seed)
    return best_config, best_score, trace


def planned_epochs(plan: BracketPlan) -> dict[int, int]:
    """Total epochs each bracket consumes under the published schedule."""
    totals = {}
    for bracket in plan.brackets:
        n, r = bracket.n_configs, bracket.resource
        total = 0
        for _ in range(bracket.s + 1):
            total += n * r
            n_keep = max(1, n // plan.eta)
            if n_keep == n:
                break
            n = n_keep
            r = min(plan.R, r * plan.eta)
        totals[bracket.s] = total
    return totals


def write_trace(path, trace: list[TraceEntry], **header) -> None:
    """Search trace as JSONL; the first line is a header with R/eta/seed."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        for entry in trace:
            fh.write(
                json.dumps(
                    {
                        "bracket": entry.bracket,
                        "round": entry.round,
                        "config_index": entry.config_index,
                        "config": entry.config,
                        "epochs": entry.epochs,
                        "score": entry.score if np.isfinite(entry.score) else None,
                        "kept": entry.kept,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
