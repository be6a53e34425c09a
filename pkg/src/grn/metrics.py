"""Segmentation metrics under the LIP-style and ATR-style protocols.

LIP-style reporting: per-class IoU, pixel accuracy, mean accuracy (mean
per-class recall) and mean IoU. ATR-style adds foreground accuracy
(accuracy over ground-truth foreground) plus precision/recall/F1
averaged over non-background classes. Classes absent from both ground
truth and prediction are excluded from all means. For orientation only:
full-scale LIP benchmarks put strong parsing baselines around mIoU
0.53-0.56; desk-scale figures here are not comparable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError

PROTOCOLS = ("lip", "atr")


@dataclass
class ConfusionMatrix:
    """Pixel counts indexed [ground truth, prediction]."""

    counts: np.ndarray

    @classmethod
    def empty(cls, c: int) -> "ConfusionMatrix":
        if c < 1:
            raise ContractError(f"need at least one class, got {c}")
        return cls(np.zeros((c, c), dtype=np.int64))

    @property
    def c(self) -> int:
        return self.counts.shape[0]

    def accumulate(self, pred: np.ndarray, gt: np.ndarray) -> "ConfusionMatrix":
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape or pred.ndim != 2 or pred.size == 0:
            raise ContractError(
                f"prediction {list(pred.shape)} and ground truth {list(gt.shape)} "
                f"must be equal nonempty 2-d maps")
        for name, arr in (("prediction", pred), ("ground truth", gt)):
            if arr.min() < 0 or arr.max() >= self.c:
                raise DataError(f"{name} ids must lie in [0, {self.c})")
        np.add.at(self.counts, (gt.ravel(), pred.ravel()), 1)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.counts.shape != self.counts.shape:
            raise ContractError("cannot merge confusion matrices of different sizes")
        self.counts += other.counts
        return self


@dataclass
class MetricsReport:
    protocol: str
    per_class_iou: list[float | None]   # None: class absent from GT and Pred
    pixel_accuracy: float
    mean_accuracy: float
    mean_iou: float
    foreground_accuracy: float | None = None
    avg_precision: float | None = None
    avg_recall: float | None = None
    avg_f1: float | None = None


def report(cm: ConfusionMatrix, protocol: str = "lip") -> MetricsReport:
    if protocol not in PROTOCOLS:
        raise ContractError(f"protocol must be one of {PROTOCOLS}, got {protocol!r}")
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise ContractError("confusion matrix is empty")
    diag = np.diag(counts)
    row = counts.sum(axis=1)   # ground-truth pixels per class
    col = counts.sum(axis=0)   # predicted pixels per class
    union = row + col - diag

    pixel_acc = float(diag.sum() / total)
    present_gt = row > 0
    mean_acc = float((diag[present_gt] / row[present_gt]).mean()) if present_gt.any() else 0.0
    per_iou: list[float | None] = []
    for k in range(cm.c):
        per_iou.append(float(diag[k] / union[k]) if union[k] > 0 else None)
    have = [v for v in per_iou if v is not None]
    mean_iou = float(np.mean(have)) if have else 0.0

    rep = MetricsReport(protocol=protocol, per_class_iou=per_iou,
                        pixel_accuracy=pixel_acc, mean_accuracy=mean_acc,
                        mean_iou=mean_iou)
    if protocol == "atr":
        fg_total = row[1:].sum()
        rep.foreground_accuracy = float(diag[1:].sum() / fg_total) if fg_total > 0 else 0.0
        precisions, recalls, f1s = [], [], []
        for k in range(1, cm.c):
            if union[k] <= 0:
                continue
            prec = float(diag[k] / col[k]) if col[k] > 0 else 0.0
            rec = float(diag[k] / row[k]) if row[k] > 0 else 0.0
            f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
            precisions.append(prec)
            recalls.append(rec)
            f1s.append(f1)
        rep.avg_precision = float(np.mean(precisions)) if precisions else 0.0
        rep.avg_recall = float(np.mean(recalls)) if recalls else 0.0
        rep.avg_f1 = float(np.mean(f1s)) if f1s else 0.0
    return rep


def evaluate_pairs(pairs: list[tuple[np.ndarray, np.ndarray]], c: int,
                   protocol: str = "lip") -> MetricsReport:
    """Report over (prediction, ground truth) map pairs."""
    cm = ConfusionMatrix.empty(c)
    for pred, gt in pairs:
        cm.accumulate(pred, gt)
    return report(cm, protocol)


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def write_metrics_tsv(path, rep: MetricsReport,
                      class_names: list[str] | None = None) -> None:
    """One `class` row per category then `aggregate` rows; column order is
    kind, name, iou (classes) / value (aggregates)."""
    lines = ["kind\tname\tvalue"]
    for k, iou in enumerate(rep.per_class_iou):
        name = class_names[k] if class_names and k < len(class_names) else str(k)
        lines.append(f"class\t{name}\t{_fmt(iou)}")
    lines.append(f"aggregate\tpixel_accuracy\t{_fmt(rep.pixel_accuracy)}")
    lines.append(f"aggregate\tmean_accuracy\t{_fmt(rep.mean_accuracy)}")
    lines.append(f"aggregate\tmean_iou\t{_fmt(rep.mean_iou)}")
    if rep.protocol == "atr":
        lines.append(f"aggregate\tforeground_accuracy\t{_fmt(rep.foreground_accuracy)}")
        lines.append(f"aggregate\tavg_precision\t{_fmt(rep.avg_precision)}")
        lines.append(f"aggregate\tavg_recall\t{_fmt(rep.avg_recall)}")
        lines.append(f"aggregate\tavg_f1\t{_fmt(rep.avg_f1)}")
    Path(path).write_text("\n".join(lines) + "\n")
