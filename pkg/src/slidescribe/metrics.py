"""Segmentation quality metrics for overlapping multi-label masks.

Each class plane is scored independently: intersection-over-union per
class, and accuracy over binary per-pixel-per-class decisions. A class
absent from both prediction and ground truth has no defined IoU and is
excluded from the mean rather than counted as zero.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class ClassCounts:
    intersection: int
    union: int
    correct: int
    total: int


@dataclass(frozen=True)
class MetricReport:
    per_class_iou: tuple
    mean_iou: float
    pixel_accuracy: float
    confusion_counts: tuple
    accuracy_numerator: int
    accuracy_denominator: int

    def as_dict(self):
        return {
            "per_class_iou": [
                None if v is None else float(v) for v in self.per_class_iou
            ],
            "mean_iou": float(self.mean_iou),
            "pixel_accuracy": float(self.pixel_accuracy),
        }


ACCURACY_MODES = ("per-decision", "any-label")


def _as_binary(mask, name):
    arr = np.asarray(mask)
    if arr.dtype == np.bool_:
        return arr
    values = np.unique(arr)
    if not np.isin(values, (0, 1)).all():
        raise ValueError(f"{name} mask must be binary, found values {values[:5]}")
    return arr.astype(bool)


def _report_from_counts(counts, acc_num, acc_den):
    ious = tuple(
        None if c.union == 0 else c.intersection / c.union for c in counts
    )
    defined = [v for v in ious if v is not None]
    mean_iou = float(np.mean(defined)) if defined else float("nan")
    pa = acc_num / acc_den if acc_den else float("nan")
    return MetricReport(
        per_class_iou=ious,
        mean_iou=mean_iou,
        pixel_accuracy=pa,
        confusion_counts=tuple(counts),
        accuracy_numerator=int(acc_num),
        accuracy_denominator=int(acc_den),
    )


def compute_metrics(pred, gt, accuracy_mode="per-decision"):
    """Score one predicted [K,H,W] mask against its ground truth.

    accuracy_mode "per-decision" counts every (pixel, class) on/off
    decision; "any-label" counts a pixel correct when the predicted and
    true label sets share a label, or both are empty.
    """
    if accuracy_mode not in ACCURACY_MODES:
        raise ValueError(f"accuracy_mode must be one of {ACCURACY_MODES}")
    p = _as_binary(pred, "pred")
    g = _as_binary(gt, "gt")
    if p.shape != g.shape:
        raise ShapeError(f"pred shape {p.shape} != gt shape {g.shape}")
    if p.ndim != 3:
        raise ShapeError(f"masks must be [K,H,W], got {p.shape}")

    counts = []
    for k in range(p.shape[0]):
        inter = int(np.logical_and(p[k], g[k]).sum())
        union = int(np.logical_or(p[k], g[k]).sum())
        correct = int((p[k] == g[k]).sum())
        counts.append(ClassCounts(inter, union, correct, p[k].size))

    if accuracy_mode == "per-decision":
        acc_num = sum(c.correct for c in counts)
        acc_den = sum(c.total for c in counts)
    else:
        shared = np.logical_and(p, g).any(axis=0)
        both_empty = np.logical_and(~p.any(axis=0), ~g.any(axis=0))
        acc_num = int(np.logical_or(shared, both_empty).sum())
        acc_den = int(p.shape[1] * p.shape[2])
    return _report_from_counts(counts, acc_num, acc_den)


def merge_reports(reports):
    """Aggregate per-image reports into one dataset-level report.

    Confusion counts are summed class-wise before any ratio is taken, so
    the result weights every pixel equally rather than every image.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("cannot merge zero reports")
    k = len(reports[0].confusion_counts)
    if any(len(r.confusion_counts) != k for r in reports):
        raise ShapeError("reports disagree on class count")
    counts = []
    for i in range(k):
        counts.append(
            ClassCounts(
                intersection=sum(r.confusion_counts[i].intersection for r in reports),
                union=sum(r.confusion_counts[i].union for r in reports),
                correct=sum(r.confusion_counts[i].correct for r in reports),
                total=sum(r.confusion_counts[i].total for r in reports),
            )
        )
    acc_num = sum(r.accuracy_numerator for r in reports)
    acc_den = sum(r.accuracy_denominator for r in reports)
    return _report_from_counts(counts, acc_num, acc_den)
