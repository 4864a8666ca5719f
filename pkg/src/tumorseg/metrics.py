"""Segmentation metrics from predicted probability maps and binary masks.

Dataset-level numbers are micro-averaged: confusion counts are pooled over
all pixels of all samples and each metric is computed once from the pooled
counts. This keeps the Dice/IoU identity ``dice == 2*iou / (1 + iou)`` exact
at the reported level. Per-image averaging is available separately and is
always labeled as such.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ValidationError

REPORT_COLUMNS = ("experiment", "accuracy", "loss", "precision", "recall", "iou", "dice")


@dataclass
class ConfusionCounts:
    """Pixel counts of the four prediction/truth combinations."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass
class PixelMetrics:
    """The five overlap metrics computed from one set of confusion counts.

    ``degenerate`` is set when a metric's denominator was zero while the
    masks actually disagreed (e.g. recall on an empty ground truth with a
    non-empty prediction); the affected metric is reported as 0.0.
    """

    accuracy: float
    precision: float
    recall: float
    iou: float
    dice: float
    degenerate: bool = False


@dataclass
class MetricReport:
    """One evaluated model's row: accuracy, loss, precision, recall, IoU, Dice."""

    experiment: str = ""
    accuracy: float = 0.0
    loss: float = float("nan")
    precision: float = 0.0
    recall: float = 0.0
    iou: float = 0.0
    dice: float = 0.0
    degenerate: bool = field(default=False, compare=False)

    def to_row(self) -> dict[str, object]:
        """Serialize to a dict with exactly the report columns, in order."""
        return {c: getattr(self, c) for c in REPORT_COLUMNS}

    def to_json(self) -> str:
        return json.dumps(self.to_row())

    @classmethod
    def from_row(cls, row: dict[str, object]) -> "MetricReport":
        return cls(
            experiment=str(row["experiment"]),
            **{c: float(row[c]) for c in REPORT_COLUMNS[1:]},  # type: ignore[arg-type]
        )


def binarize_prediction(pred: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold a probability map: 1 where pred >= threshold, else 0."""
    if not 0.0 < threshold < 1.0:
        raise ConfigurationError(f"threshold must lie strictly in (0, 1), got {threshold}")
    return (np.asarray(pred) >= threshold).astype(np.uint8)


def confusion_counts(pred_mask: np.ndarray, gt_mask: np.ndarray) -> ConfusionCounts:
    """Count (prediction, truth) pixel pairs for two binary masks."""
    pred_mask, gt_mask = np.asarray(pred_mask), np.asarray(gt_mask)
    if pred_mask.shape != gt_mask.shape:
        raise ValueError(f"mask shapes differ: {pred_mask.shape} vs {gt_mask.shape}")
    for name, m in (("pred_mask", pred_mask), ("gt_mask", gt_mask)):
        if not np.isin(m, (0, 1)).all():
            raise ValidationError(f"{name} contains non-binary values")
    p, g = pred_mask.astype(bool), gt_mask.astype(bool)
    return ConfusionCounts(
        tp=int((p & g).sum()),
        fp=int((p & ~g).sum()),
        fn=int((~p & g).sum()),
        tn=int((~p & ~g).sum()),
    )


def compute_metrics(counts: ConfusionCounts) -> PixelMetrics:
    """Accuracy, precision, recall, IoU, and Dice from confusion counts.

    Degenerate denominators: when prediction and truth are both empty the
    masks agree perfectly and every metric is 1.0 by convention; any other
    zero denominator yields 0.0 with the degenerate flag set.
    """
    n = counts.total
    if n == 0:
        raise ValueError("cannot compute metrics over zero pixels")
    perfect = counts.fp == 0 and counts.fn == 0
    degenerate = False

    def ratio(num: int, den: int) -> float:
        nonlocal degenerate
        if den == 0:
            if perfect:
                return 1.0
            degenerate = True
            return 0.0
        return num / den

    accuracy = (counts.tp + counts.tn) / n
    precision = ratio(counts.tp, counts.tp + counts.fp)
    recall = ratio(counts.tp, counts.tp + counts.fn)
    iou = ratio(counts.tp, counts.tp + counts.fp + counts.fn)
    dice = ratio(2 * counts.tp, 2 * counts.tp + counts.fp + counts.fn)
    return PixelMetrics(accuracy, precision, recall, iou, dice, degenerate)


def _pooled_counts(
    pred_maps: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray], threshold: float
) -> Iterable[ConfusionCounts]:
    if len(pred_maps) == 0:
        raise ValueError("cannot evaluate an empty dataset")
    if len(pred_maps) != len(gt_masks):
        raise ValueError(f"{len(pred_maps)} predictions vs {len(gt_masks)} masks")
    for pred, gt in zip(pred_maps, gt_masks):
        yield confusion_counts(binarize_prediction(pred, threshold), gt)


def evaluate_dataset(
    pred_maps: Sequence[np.ndarray],
    gt_masks: Sequence[np.ndarray],
    threshold: float = 0.5,
) -> MetricReport:
    """Micro-averaged metrics over a whole dataset; the caller fills loss."""
    total = ConfusionCounts()
    for counts in _pooled_counts(pred_maps, gt_masks, threshold):
        total = total + counts
    m = compute_metrics(total)
    return MetricReport(
        accuracy=m.accuracy,
        precision=m.precision,
        recall=m.recall,
        iou=m.iou,
        dice=m.dice,
        degenerate=m.degenerate,
    )


def evaluate_dataset_per_image(
    pred_maps: Sequence[np.ndarray],
    gt_masks: Sequence[np.ndarray],
    threshold: float = 0.5,
) -> dict[str, float]:
    """Mean of per-image metrics (the alternative averaging convention).

    Keys are suffixed ``_per_image`` so the convention is never confused with
    the micro-averaged report values.
    """
    per_image = [compute_metrics(c) for c in _pooled_counts(pred_maps, gt_masks, threshold)]
    return {
        f"{name}_per_image": float(np.mean([getattr(m, name) for m in per_image]))
        for name in ("accuracy", "precision", "recall", "iou", "dice")
    }
