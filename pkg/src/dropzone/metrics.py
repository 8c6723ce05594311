"""Evaluation suite: pixel confusion metrics, drop-zone MAE/AP/ROC-AUC,
stochastic-run aggregation, pooled curves, and Cohen's kappa.

Undefined values (zero denominators, single-class AUC) are encoded as NaN
and excluded from aggregation rather than coerced to 0 or 1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import imgcore

SWEEP_ETAS = (0.95, 0.90, 0.85, 0.80)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ZoneSample:
    predicted_ratio: float
    truth_ratio: float
    frame_id: str
    run_id: int = 0


def confusion(pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    """Pixel confusion counts with unsafe (bit 1) as the positive class."""
    p = imgcore.as_mask(pred).astype(bool)
    t = imgcore.as_mask(truth).astype(bool)
    if p.shape != t.shape:
        raise ValueError(f"mask dims differ: {p.shape} vs {t.shape}")
    return ConfusionCounts(
        tp=int((p & t).sum()),
        fp=int((p & ~t).sum()),
        tn=int((~p & ~t).sum()),
        fn=int((~p & t).sum()),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else math.nan


def pixel_metrics(c: ConfusionCounts) -> dict[str, float]:
    """IoU, Dice/F1, precision, recall, specificity, accuracy, balanced acc."""
    if c.total <= 0:
        raise ValueError("confusion counts are empty")
    recall = _ratio(c.tp, c.tp + c.fn)
    specificity = _ratio(c.tn, c.tn + c.fp)
    return {
        "iou": _ratio(c.tp, c.tp + c.fp + c.fn),
        "dice": _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        "precision": _ratio(c.tp, c.tp + c.fp),
        "recall": recall,
        "specificity": specificity,
        "accuracy": _ratio(c.tp + c.tn, c.total),
        "balanced_accuracy": (recall + specificity) / 2.0,
    }


def zone_labels(samples: list[ZoneSample], eta: float) -> list[tuple[int, int]]:
    """Binary (predicted, truth) labels by thresholding both ratios at eta."""
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")
    return [(int(s.predicted_ratio >= eta), int(s.truth_ratio >= eta))
            for s in samples]


def mae(samples: list[ZoneSample]) -> float:
    """Mean absolute error between predicted and ground-truth safe ratios."""
    if not samples:
        return math.nan
    return float(np.mean([abs(s.predicted_ratio - s.truth_ratio)
                          for s in samples]))


def average_precision(scores, labels) -> float:
    """AP as precision-at-each-positive, ranked by score descending.

    Ties are broken by stable input order.  NaN when no positives exist.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    if n_pos == 0:
        return math.nan
    order = np.argsort(-scores, kind="stable")
    hits = 0
    total = 0.0
    for rank, idx in enumerate(order, start=1):
        if labels[idx] == 1:
            hits += 1
            total += hits / rank
    return total / n_pos


def roc_auc(scores, labels) -> float:
    """ROC-AUC via the rank statistic P(s+ > s-) + 0.5 P(tie).

    Equivalent to the trapezoidal area under the tie-grouped ROC curve.
    NaN when only one class is present.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    from scipy.stats import rankdata

    ranks = rankdata(scores)  # average ranks on ties
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def aggregate_stochastic(per_frame_runs: list[list[float]]
                         ) -> tuple[float, float]:
    """Frame value = mean over defined runs; report mean and population std
    across frames.  Frames with no defined run are dropped with a warning."""
    frame_values = []
    for i, runs in enumerate(per_frame_runs):
        defined = [v for v in runs if not math.isnan(v)]
        if not defined:
            warnings.warn(f"frame {i} has no defined runs; excluded")
            continue
        frame_values.append(sum(defined) / len(defined))
    if not frame_values:
        return math.nan, math.nan
    arr = np.asarray(frame_values, dtype=float)
    return float(arr.mean()), float(arr.std())  # population std


def pooled_curves(samples: list[ZoneSample], eta: float) -> dict:
    """Global ROC and PR curves over the pooled (score, label) pairs.

    Points are emitted at every distinct predicted score plus a sentinel
    threshold above the maximum, so the ROC runs from (0, 0) to (1, 1).
    Single-class pools yield empty curves with a diagnostic warning.
    """
    labels = [truth for _, truth in zone_labels(samples, eta)]
    scores = [s.predicted_ratio for s in samples]
    y = np.asarray(labels, dtype=int)
    s = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        warnings.warn("pooled sample set contains a single class; empty curves")
        return {"roc": [], "pr": []}
    thresholds = np.concatenate(([np.inf], np.unique(s)[::-1]))
    roc = []
    pr = []
    for thr in thresholds:
        pred = s >= thr
        tp = int((pred & (y == 1)).sum())
        fp = int((pred & (y == 0)).sum())
        tpr = tp / n_pos
        fpr = fp / n_neg
        roc.append((float(thr), fpr, tpr))
        if tp + fp > 0:
            pr.append((float(thr), tpr, tp / (tp + fp)))  # (thr, recall, prec)
    return {"roc": roc, "pr": pr}


def curve_auc(roc_points: list[tuple[float, float, float]]) -> float:
    """Trapezoidal area under an ROC point list of (threshold, fpr, tpr)."""
    if not roc_points:
        return math.nan
    fpr = np.asarray([p[1] for p in roc_points])
    tpr = np.asarray([p[2] for p in roc_points])
    return float(np.trapezoid(tpr, fpr))


def cohens_kappa(ratings_a, ratings_b) -> float:
    """Unweighted Cohen's kappa between two raters; NaN when chance
    agreement is perfect."""
    a = list(ratings_a)
    b = list(ratings_b)
    if len(a) != len(b):
        raise ValueError("rating lists differ in length")
    if not a:
        raise ValueError("rating lists are empty")
    n = len(a)
    categories = sorted(set(a) | set(b))
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    p_e = sum((a.count(cat) / n) * (b.count(cat) / n) for cat in categories)
    if p_e >= 1.0:
        return math.nan
    return (p_o - p_e) / (1.0 - p_e)


def _group_by_frame_run(samples: list[ZoneSample]
                        ) -> dict[str, dict[int, list[ZoneSample]]]:
    grouped: dict[str, dict[int, list[ZoneSample]]] = {}
    for s in samples:
        grouped.setdefault(s.frame_id, {}).setdefault(s.run_id, []).append(s)
    return grouped


def threshold_sweep(samples: list[ZoneSample],
                    etas=SWEEP_ETAS) -> dict[float, dict[str, dict]]:
    """Per-eta frame-then-dataset reports of AP, ROC-AUC and MAE.

    Metrics are computed per (frame, run), run-averaged per frame, then
    aggregated across frames with population std.
    """
    if not samples:
        raise ValueError("no zone samples supplied")
    grouped = _group_by_frame_run(samples)
    out: dict[float, dict[str, dict]] = {}
    for eta in etas:
        per_metric: dict[str, list[list[float]]] = {"ap": [], "roc_auc": [], "mae": []}
        for frame_id in sorted(grouped):
            runs = grouped[frame_id]
            ap_runs, roc_runs, mae_runs = [], [], []
            for run_id in sorted(runs):
                batch = runs[run_id]
                labels = [t for _, t in zone_labels(batch, eta)]
                scores = [s.predicted_ratio for s in batch]
                ap_runs.append(average_precision(scores, labels))
                roc_runs.append(roc_auc(scores, labels))
                mae_runs.append(mae(batch))
            per_metric["ap"].append(ap_runs)
            per_metric["roc_auc"].append(roc_runs)
            per_metric["mae"].append(mae_runs)
        report = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for name, frame_runs in per_metric.items():
                mean, std = aggregate_stochastic(frame_runs)
                report[name] = {"mean": mean, "std": std}
        out[eta] = report
    return out
