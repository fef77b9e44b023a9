"""Evaluation: ROC/PR curves, AUC, operating points, Welch's t-test, subgroups."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

GRID_POINTS = 512


@dataclass
class CurveReport:
    """Threshold-swept curve points plus area under the curve.

    ``points`` rows are (threshold, x, y): (threshold, fpr, tpr) for ROC,
    (threshold, recall, precision) for PR.  For multi-restart summaries see
    aggregate_curves.
    """

    kind: str  # "roc" | "pr"
    points: np.ndarray  # (m, 3)
    auc: float
    mean: np.ndarray | None = None
    stderr: np.ndarray | None = None
    grid: np.ndarray | None = None
    restart_values: list = field(default_factory=list)


def _sweep(scores: np.ndarray, labels: np.ndarray):
    """Cumulative TP/FP counts at each distinct score threshold, descending.

    Returns (thresholds, tp, fp): predicting positive for score >= threshold.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp_cum = np.cumsum(sorted_labels == 1)
    fp_cum = np.cumsum(sorted_labels == 0)
    # collapse tied scores: keep the last index of each distinct value
    distinct = np.nonzero(np.diff(sorted_scores, append=-np.inf))[0]
    return sorted_scores[distinct], tp_cum[distinct], fp_cum[distinct]


def roc_curve(scores, labels) -> CurveReport:
    """ROC by threshold sweep with tied scores collapsed; trapezoid AUC.

    The tie convention makes the AUC equal to the pairwise ranking statistic
    with ties counted one half.
    """
    labels = np.asarray(labels, dtype=int)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_curve needs at least one positive and one negative")
    thresholds, tp, fp = _sweep(scores, labels)
    tpr = tp / n_pos
    fpr = fp / n_neg
    # prepend the (0, 0) origin with a threshold above every score
    thresholds = np.concatenate([[thresholds[0] + 1.0], thresholds])
    tpr = np.concatenate([[0.0], tpr])
    fpr = np.concatenate([[0.0], fpr])
    auc = float(np.trapezoid(tpr, fpr))
    points = np.column_stack([thresholds, fpr, tpr])
    return CurveReport(kind="roc", points=points, auc=auc)


def pr_curve(scores, labels) -> CurveReport:
    """Precision/recall at each distinct threshold; no interpolation."""
    labels = np.asarray(labels, dtype=int)
    n_pos = int((labels == 1).sum())
    if n_pos == 0:
        raise ValueError("pr_curve needs at least one positive")
    thresholds, tp, fp = _sweep(scores, labels)
    recall = tp / n_pos
    precision = tp / np.maximum(tp + fp, 1)
    points = np.column_stack([thresholds, recall, precision])
    # area by trapezoid over recall, from recall 0 at the first point's precision
    recall_ext = np.concatenate([[0.0], recall])
    precision_ext = np.concatenate([[precision[0]], precision])
    auc = float(np.trapezoid(precision_ext, recall_ext))
    return CurveReport(kind="pr", points=points, auc=auc)


def pairwise_auc(scores, labels) -> float:
    """O(n^2) ranking statistic: P(score_pos > score_neg), ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins / (len(pos) * len(neg)))


def metric_at(curve: CurveReport, x_target: float) -> float:
    """Linearly interpolated y value of a curve at the given x.

    For ROC, x is FPR and y is TPR; for PR, x is recall and y is precision.
    """
    x = curve.points[:, 1]
    y = curve.points[:, 2]
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    if not (x.min() <= x_target <= x.max()):
        raise ValueError(f"target {x_target} outside curve range [{x.min()}, {x.max()}]")
    return float(np.interp(x_target, x, y))


def metric_at_restarts(
    curves: list[CurveReport], x_target: float
) -> tuple[list[float], float, float]:
    """Per-restart metric values with their mean and standard error."""
    values = [metric_at(c, x_target) for c in curves]
    mean = float(np.mean(values))
    stderr = (
        float(np.std(values, ddof=1) / np.sqrt(len(values))) if len(values) > 1 else 0.0
    )
    return values, mean, stderr


def welch_t(samples_a, samples_b) -> tuple[float, float, float]:
    """Welch's t-test: returns (t, Welch-Satterthwaite df, two-sided p).

    If both variances are zero: p = 1 when the means are equal, else p = 0
    (degenerate-sample convention).
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("welch_t requires at least two samples per group")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        equal = a.mean() == b.mean()
        return 0.0 if equal else np.inf, float(len(a) + len(b) - 2), 1.0 if equal else 0.0
    se2 = va / len(a) + vb / len(b)
    t = float((a.mean() - b.mean()) / np.sqrt(se2))
    df = se2**2 / (
        (va / len(a)) ** 2 / (len(a) - 1) + (vb / len(b)) ** 2 / (len(b) - 1)
    )
    # two-sided p from the Student-t CDF via the regularized incomplete beta
    x = df / (df + t * t)
    p = float(betainc(df / 2.0, 0.5, x))
    return t, float(df), p


def eval_by_group(scores, labels, family_tags, group: str) -> CurveReport:
    """ROC with positives restricted to one family group, all negatives kept."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    tags = np.asarray(family_tags, dtype=object)
    in_group_pos = (labels == 1) & (tags == group)
    if not in_group_pos.any():
        raise ValueError(f"no positive instances in group {group!r}")
    keep = (labels == 0) | in_group_pos
    return roc_curve(scores[keep], labels[keep])


def aggregate_curves(
    curves: list[CurveReport], grid: np.ndarray | None = None
) -> CurveReport:
    """Mean and standard error of several restarts' curves on a common x grid.

    The grid is 512 evenly spaced x values plus every exact breakpoint of the
    input curves.
    """
    if not curves:
        raise ValueError("no curves to aggregate")
    kind = curves[0].kind
    if grid is None:
        breakpoints = np.concatenate([c.points[:, 1] for c in curves])
        grid = np.unique(
            np.concatenate([np.linspace(0.0, 1.0, GRID_POINTS), breakpoints])
        )
    stacked = []
    for c in curves:
        x, y = c.points[:, 1], c.points[:, 2]
        order = np.argsort(x, kind="stable")
        stacked.append(np.interp(grid, x[order], y[order]))
    stacked = np.array(stacked)
    mean = stacked.mean(axis=0)
    stderr = (
        stacked.std(axis=0, ddof=1) / np.sqrt(len(curves))
        if len(curves) > 1
        else np.zeros_like(mean)
    )
    points = np.column_stack([np.full_like(grid, np.nan), grid, mean])
    return CurveReport(
        kind=kind,
        points=points,
        auc=float(np.mean([c.auc for c in curves])),
        mean=mean,
        stderr=stderr,
        grid=grid,
        restart_values=[c.auc for c in curves],
    )


def write_curve_csv(path, curve: CurveReport) -> None:
    """Curve CSV: threshold, x, y, mean, stderr (mean/stderr blank if absent)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "x", "y", "mean", "stderr"])
        has_bands = curve.mean is not None and curve.stderr is not None
        for i, (thr, x, y) in enumerate(curve.points):
            mean = f"{curve.mean[i]:.10f}" if has_bands else ""
            err = f"{curve.stderr[i]:.10f}" if has_bands else ""
            thr_txt = "" if np.isnan(thr) else f"{thr:.10f}"
            writer.writerow([thr_txt, f"{x:.10f}", f"{y:.10f}", mean, err])


def read_curve_csv(path) -> CurveReport:
    """Read a curve CSV written by write_curve_csv (kind recovered as 'roc')."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            thr = float(row["threshold"]) if row["threshold"] else np.nan
            rows.append((thr, float(row["x"]), float(row["y"])))
    points = np.array(rows)
    x, y = points[:, 1], points[:, 2]
    order = np.argsort(x, kind="stable")
    auc = float(np.trapezoid(y[order], x[order]))
    return CurveReport(kind="roc", points=points, auc=auc)
