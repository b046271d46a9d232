"""Evaluation protocol: pixel F1, image sensitivity/specificity/F1, AUC, Com-F1, robustness sweeps.

Decisions use `value >= threshold`. Pixel metrics are computed on
manipulated images only; authentic images enter only the image-level
metrics. Rates that are undefined because a class is absent are reported as
NaN and rendered as "undefined" in report files.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .data import Sample, apply_blur, apply_jpeg, make_sample, map_ordered
from .errors import EvaluationError

DEFAULT_THRESHOLD = 0.5
DEFAULT_THRESHOLD_GRID = tuple(np.round(np.arange(0.01, 1.00, 0.01), 2))


@dataclass
class ScoredSample:
    """Model outputs paired with ground truth for one image."""

    seg_map: np.ndarray  # (H, W) probabilities
    image_score: float
    truth_mask: np.ndarray | None  # (H, W) binary; None for authentic entries
    truth_label: int


@dataclass
class MetricsReport:
    pixel_precision: float
    pixel_recall: float
    pixel_f1: float
    sensitivity: float
    specificity: float
    image_f1: float
    auc: float
    com_f1: float
    threshold_mode: str  # e.g. "fixed(0.500)" or "optimal(0.370)"
    pixel_threshold: float

    def records(self) -> list[tuple[str, str, float]]:
        return [
            ("pixel_precision", self.threshold_mode, self.pixel_precision),
            ("pixel_recall", self.threshold_mode, self.pixel_recall),
            ("pixel_f1", self.threshold_mode, self.pixel_f1),
            ("sensitivity", f"fixed({DEFAULT_THRESHOLD:.3f})", self.sensitivity),
            ("specificity", f"fixed({DEFAULT_THRESHOLD:.3f})", self.specificity),
            ("image_f1", f"fixed({DEFAULT_THRESHOLD:.3f})", self.image_f1),
            ("auc", "none", self.auc),
            ("com_f1", self.threshold_mode, self.com_f1),
        ]


def _fmt(value: float) -> str:
    return "undefined" if math.isnan(value) else f"{value:.6f}"


def write_report(report: MetricsReport, path: str | Path) -> None:
    lines = [f"{name},{mode},{_fmt(value)}" for name, mode, value in report.records()]
    Path(path).write_text("\n".join(lines) + "\n")


def summarize_report(report: MetricsReport) -> str:
    return (
        f"pixel_f1={_fmt(report.pixel_f1)} image_f1={_fmt(report.image_f1)} "
        f"auc={_fmt(report.auc)} com_f1={_fmt(report.com_f1)} "
        f"[{report.threshold_mode}]"
    )


# ---------------------------------------------------------------------------
# pixel level


def pixel_f1(
    samples: Sequence[ScoredSample],
    threshold: float = DEFAULT_THRESHOLD,
    pooled: bool = True,
) -> tuple[float, float, float]:
    """Precision/recall/F1 over the pixels of all manipulated samples.

    `pooled` counts TP/FP/FN over the union of all pixels (the default);
    otherwise per-image F1 values are averaged.
    """
    manipulated = [s for s in samples if s.truth_label == 1]
    if not manipulated:
        raise EvaluationError("pixel metrics need at least one manipulated sample")
    if pooled:
        tp = fp = fn = 0
        for s in manipulated:
            pred = s.seg_map >= threshold
            truth = s.truth_mask > 0
            tp += int(np.sum(pred & truth))
            fp += int(np.sum(pred & ~truth))
            fn += int(np.sum(~pred & truth))
        return _prf(tp, fp, fn)
    per_image = []
    for s in manipulated:
        pred = s.seg_map >= threshold
        truth = s.truth_mask > 0
        per_image.append(
            _prf(
                int(np.sum(pred & truth)),
                int(np.sum(pred & ~truth)),
                int(np.sum(~pred & truth)),
            )
        )
    arr = np.asarray(per_image, dtype=np.float64)
    return tuple(arr.mean(axis=0))


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return precision, recall, f1


def optimal_threshold_f1(
    samples: Sequence[ScoredSample],
    grid: Sequence[float] = DEFAULT_THRESHOLD_GRID,
    pooled: bool = True,
) -> tuple[float, float]:
    """Threshold in the grid maximizing pixel F1; ties resolve to the lowest threshold."""
    if len(grid) == 0:
        raise EvaluationError("threshold grid is empty")
    best_thr, best_f1 = None, -1.0
    for thr in sorted(grid):
        _, _, f1 = pixel_f1(samples, threshold=thr, pooled=pooled)
        if f1 > best_f1:
            best_thr, best_f1 = thr, f1
    return float(best_thr), best_f1


# ---------------------------------------------------------------------------
# image level


def image_metrics(
    samples: Sequence[ScoredSample], threshold: float = DEFAULT_THRESHOLD
) -> tuple[float, float, float]:
    """(sensitivity, specificity, their harmonic-mean F1) of image decisions.

    A class with no samples makes its rate NaN, and the F1 NaN with it.
    """
    if not samples:
        raise EvaluationError("image metrics need at least one sample")
    pos = [s for s in samples if s.truth_label == 1]
    neg = [s for s in samples if s.truth_label == 0]
    sensitivity = (
        sum(s.image_score >= threshold for s in pos) / len(pos) if pos else float("nan")
    )
    specificity = (
        sum(s.image_score < threshold for s in neg) / len(neg) if neg else float("nan")
    )
    f1 = com_f1(sensitivity, specificity)
    return sensitivity, specificity, f1


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve via the rank statistic (ties counted half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def com_f1(pixel_level_f1: float, image_level_f1: float) -> float:
    """Harmonic mean of the two F1 values; 0 when either is 0, NaN-propagating."""
    a, b = float(pixel_level_f1), float(image_level_f1)
    if math.isnan(a) or math.isnan(b):
        return float("nan")
    if a == 0.0 or b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


# ---------------------------------------------------------------------------
# report assembly


def score_model(
    net, samples: Iterable[Sample], batch_size: int = 8
) -> list[ScoredSample]:
    """Run a network over samples and pair its outputs with ground truth."""
    from .inference import predict_arrays

    samples = list(samples)
    if not samples:
        return []
    images = np.stack([s.image for s in samples])
    segs, _, scores = predict_arrays(net, images, batch_size=batch_size)
    return [
        ScoredSample(
            seg_map=segs[i],
            image_score=float(scores[i]),
            truth_mask=samples[i].mask,
            truth_label=samples[i].image_label,
        )
        for i in range(len(samples))
    ]


def build_report(
    scored: Sequence[ScoredSample],
    mode: str = "fixed",
    threshold: float = DEFAULT_THRESHOLD,
    grid: Sequence[float] = DEFAULT_THRESHOLD_GRID,
    pooled: bool = True,
) -> MetricsReport:
    """Assemble the full evaluation report in fixed- or optimal-threshold mode."""
    if mode not in ("fixed", "optimal"):
        raise EvaluationError(f"unknown threshold mode {mode!r}")
    if mode == "optimal":
        pix_thr, _ = optimal_threshold_f1(scored, grid=grid, pooled=pooled)
        mode_tag = f"optimal({pix_thr:.3f})"
    else:
        pix_thr = threshold
        mode_tag = f"fixed({pix_thr:.3f})"
    precision, recall, f1 = pixel_f1(scored, threshold=pix_thr, pooled=pooled)
    sensitivity, specificity, image_f1 = image_metrics(scored, threshold=DEFAULT_THRESHOLD)
    labels = [s.truth_label for s in scored]
    try:
        auc_value = auc([s.image_score for s in scored], labels)
    except EvaluationError:
        auc_value = float("nan")
    return MetricsReport(
        pixel_precision=precision,
        pixel_recall=recall,
        pixel_f1=f1,
        sensitivity=sensitivity,
        specificity=specificity,
        image_f1=image_f1,
        auc=auc_value,
        com_f1=com_f1(f1, image_f1),
        threshold_mode=mode_tag,
        pixel_threshold=pix_thr,
    )


# ---------------------------------------------------------------------------
# robustness protocol


def _perturb(sample: Sample, kind: str, level: float) -> Sample:
    """Perturb the image only; JPEG quality >= 100 and blur sigma <= 0 are identity levels."""
    if kind == "jpeg":
        if level >= 100:
            return sample
        image = apply_jpeg(sample.image, int(level))
    elif kind == "blur":
        if level <= 0:
            return sample
        image = apply_blur(sample.image, float(level))
    else:
        raise EvaluationError(f"unknown perturbation kind {kind!r}")
    return make_sample(image, sample.mask, path=sample.path)


def robustness_sweep(
    net,
    samples: Sequence[Sample],
    kind: str,
    levels: Sequence[float],
    threshold: float = DEFAULT_THRESHOLD,
    batch_size: int = 8,
) -> list[tuple[float, float]]:
    """Pixel F1 at the fixed threshold for each perturbation level (labels untouched)."""
    curve = []
    for level in levels:
        perturbed = map_ordered(lambda s: _perturb(s, kind, level), list(samples))
        scored = score_model(net, perturbed, batch_size=batch_size)
        _, _, f1 = pixel_f1(scored, threshold=threshold)
        curve.append((float(level), f1))
    return curve


def write_curve(curve: Sequence[tuple[float, float]], path: str | Path) -> None:
    Path(path).write_text("".join(f"{level:g},{value:.6f}\n" for level, value in curve))
