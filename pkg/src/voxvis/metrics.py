"""Scene-completion evaluation: geometric IoU, per-class IoU, mean IoU.

Geometric IoU binarizes both grids (label != 0 is occupied) and scores
occupancy agreement. Semantic mean IoU averages per-class IoU over classes
1..num_classes-1 (class 0 is empty space and never enters the mean);
classes absent from both prediction and ground truth are dropped from the
mean unless strict_classes pins the full class list. Voxels flagged in the
optional invalid mask are excluded from every tally. The complementary
loss value 1 - mIoU is reported alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LabelRangeError, ShapeMismatchError
from .grid import SemanticVoxelGrid, VoxelMask


@dataclass
class ClassConfusion:
    """Per-class TP/FP/FN tallies plus binary-occupancy tallies.

    Addition over batches equals one pass over the concatenated data, so
    dataset-level scores accumulate scene by scene.
    """

    num_classes: int
    tp: np.ndarray = field(default=None)
    fp: np.ndarray = field(default=None)
    fn: np.ndarray = field(default=None)
    geo_tp: int = 0
    geo_fp: int = 0
    geo_fn: int = 0
    evaluated: int = 0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError("need at least one non-empty class")
        for name in ("tp", "fp", "fn"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.num_classes, dtype=np.int64))
            else:
                setattr(
                    self,
                    name,
                    np.ascontiguousarray(getattr(self, name), dtype=np.int64),
                )

    def add(self, pred: np.ndarray, gt: np.ndarray, valid: np.ndarray | None = None):
        pred = np.asarray(pred).reshape(-1)
        gt = np.asarray(gt).reshape(-1)
        if pred.shape != gt.shape:
            raise ShapeMismatchError(f"pred {pred.shape} vs gt {gt.shape}")
        if valid is not None:
            pred, gt = pred[valid.reshape(-1)], gt[valid.reshape(-1)]
        bad = np.unique(np.concatenate([pred[pred >= self.num_classes], gt[gt >= self.num_classes]]))
        if bad.size:
            raise LabelRangeError(bad, self.num_classes)

        agree = pred == gt
        self.tp += np.bincount(gt[agree], minlength=self.num_classes)
        self.fp += np.bincount(pred[~agree], minlength=self.num_classes)
        self.fn += np.bincount(gt[~agree], minlength=self.num_classes)

        p_occ, g_occ = pred != 0, gt != 0
        self.geo_tp += int(np.count_nonzero(p_occ & g_occ))
        self.geo_fp += int(np.count_nonzero(p_occ & ~g_occ))
        self.geo_fn += int(np.count_nonzero(~p_occ & g_occ))
        self.evaluated += int(pred.size)
        return self

    def merge(self, other: "ClassConfusion") -> "ClassConfusion":
        if other.num_classes != self.num_classes:
            raise ShapeMismatchError(
                f"class counts differ: {self.num_classes} vs {other.num_classes}"
            )
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.geo_tp += other.geo_tp
        self.geo_fp += other.geo_fp
        self.geo_fn += other.geo_fn
        self.evaluated += other.evaluated
        return self

    def finalize(self, strict_classes: bool = False) -> "EvalReport":
        geo_union = self.geo_tp + self.geo_fp + self.geo_fn
        iou = self.geo_tp / geo_union if geo_union else 1.0

        per_class = []
        ious = []
        for c in range(1, self.num_classes):
            union = int(self.tp[c] + self.fp[c] + self.fn[c])
            if union == 0 and not strict_classes:
                continue
            c_iou = self.tp[c] / union if union else 0.0
            per_class.append(
                ClassIoU(c, c_iou, int(self.tp[c]), int(self.fp[c]), int(self.fn[c]))
            )
            ious.append(c_iou)
        # fsum is correctly rounded, so the mean is independent of class
        # order and relabeling permutations preserve it bit for bit.
        miou = math.fsum(ious) / len(ious) if ious else 1.0
        return EvalReport(iou=float(iou), per_class=per_class, miou=miou, miou_loss=1.0 - miou)


@dataclass(frozen=True)
class ClassIoU:
    id: int
    iou: float
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class EvalReport:
    iou: float
    per_class: list
    miou: float
    miou_loss: float

    def to_json(self) -> dict:
        return {
            "iou": self.iou,
            "miou": self.miou,
            "miou_loss": self.miou_loss,
            "per_class": [
                {"id": c.id, "iou": c.iou, "tp": c.tp, "fp": c.fp, "fn": c.fn}
                for c in self.per_class
            ],
        }

    def to_table(self) -> str:
        """Aligned-column text table of the per-class scores."""
        lines = [
            f"{'class':>6} {'iou':>8} {'tp':>10} {'fp':>10} {'fn':>10}",
        ]
        for c in self.per_class:
            lines.append(f"{c.id:>6} {c.iou:>8.4f} {c.tp:>10} {c.fp:>10} {c.fn:>10}")
        lines.append(f"{'IoU':>6} {self.iou:>8.4f}")
        lines.append(f"{'mIoU':>6} {self.miou:>8.4f}")
        return "\n".join(lines)


def _valid_from(invalid: VoxelMask | None, grid: SemanticVoxelGrid):
    if invalid is None:
        return None
    if invalid.dims != grid.dims:
        raise ShapeMismatchError(f"invalid mask dims {invalid.dims} vs grid {grid.dims}")
    return ~invalid.to_dense().reshape(-1)


def _check_grids(pred: SemanticVoxelGrid, gt: SemanticVoxelGrid):
    if pred.dims != gt.dims:
        raise ShapeMismatchError(f"pred dims {pred.dims} vs gt dims {gt.dims}")


def geometric_iou(
    pred: SemanticVoxelGrid, gt: SemanticVoxelGrid, invalid: VoxelMask | None = None
) -> float:
    """Binary-occupancy IoU. Empty vs empty is defined as 1.0."""
    _check_grids(pred, gt)
    valid = _valid_from(invalid, gt)
    p, g = pred.labels, gt.labels
    if valid is not None:
        p, g = p[valid], g[valid]
    p_occ, g_occ = p != 0, g != 0
    tp = int(np.count_nonzero(p_occ & g_occ))
    union = tp + int(np.count_nonzero(p_occ ^ g_occ))
    return tp / union if union else 1.0


def semantic_miou(
    pred: SemanticVoxelGrid,
    gt: SemanticVoxelGrid,
    invalid: VoxelMask | None = None,
    num_classes: int = 20,
    strict_classes: bool = False,
) -> EvalReport:
    """Per-class IoU and their mean over classes 1..num_classes-1."""
    _check_grids(pred, gt)
    conf = ClassConfusion(num_classes)
    conf.add(pred.labels, gt.labels, _valid_from(invalid, gt))
    return conf.finalize(strict_classes=strict_classes)


def accumulate(
    confusion: ClassConfusion,
    pred: SemanticVoxelGrid,
    gt: SemanticVoxelGrid,
    invalid: VoxelMask | None = None,
) -> ClassConfusion:
    """Tally one scene into a running confusion (counterwise addition)."""
    _check_grids(pred, gt)
    return confusion.add(pred.labels, gt.labels, _valid_from(invalid, gt))
