"""Scene completion (binary, occluded voxels) and semantic IoU evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError
from .labels import CLASS_NAMES, EMPTY, IGNORE, NUM_CLASSES, LabelVolume
from .occupancy import OccupancyGrid
from .tsdf import Visibility

UNDEFINED = "undefined"


def _ratio(num, den):
    return None if den == 0 else num / den


def _check(pred: LabelVolume, gt: LabelVolume, grid: OccupancyGrid):
    if not (pred.spec == gt.spec == grid.spec):
        raise ShapeMismatchError("prediction, ground truth and occupancy grid use different grids")


def _base_domain(gt, grid):
    return grid.room.values & (gt.values != IGNORE)


def sc_domain(gt: LabelVolume, grid: OccupancyGrid) -> np.ndarray:
    """Occluded voxels inside the room and the camera view."""
    return _base_domain(gt, grid) & (grid.visibility.values == Visibility.OCCLUDED)


def ssc_domain(gt: LabelVolume, grid: OccupancyGrid, include_visible_free=False) -> np.ndarray:
    """Visible-surface and occluded voxels inside the room and view."""
    vis = grid.visibility.values
    keep = (vis == Visibility.OCCLUDED) | (vis == Visibility.OCCUPIED)
    if include_visible_free:
        keep |= vis == Visibility.VISIBLE_FREE
    return _base_domain(gt, grid) & keep


def _occupied(labels):
    return (labels != EMPTY) & (labels < NUM_CLASSES)


def _sc_counts(pred, gt, grid):
    _check(pred, gt, grid)
    dom = sc_domain(gt, grid)
    p = _occupied(pred.values) & dom
    g = _occupied(gt.values) & dom
    return np.array([np.count_nonzero(p & g), np.count_nonzero(p & ~g), np.count_nonzero(~p & g)], dtype=np.int64)


def _ssc_counts(pred, gt, grid, include_visible_free=False):
    # rows: classes 1..11; columns: intersection, union
    _check(pred, gt, grid)
    dom = ssc_domain(gt, grid, include_visible_free)
    p = pred.values[dom]
    g = gt.values[dom]
    out = np.zeros((NUM_CLASSES - 1, 2), dtype=np.int64)
    for c in range(1, NUM_CLASSES):
        pc = p == c
        gc = g == c
        out[c - 1] = np.count_nonzero(pc & gc), np.count_nonzero(pc | gc)
    return out


def _sc_from_counts(counts):
    tp, fp, fn = (int(c) for c in counts)
    return _ratio(tp, tp + fp), _ratio(tp, tp + fn), _ratio(tp, tp + fp + fn)


def _ssc_from_counts(counts):
    ious = [_ratio(int(i), int(u)) for i, u in counts]
    defined = [v for v in ious if v is not None]
    # plain left-to-right mean so the result does not depend on numpy's pairwise summation
    return ious, (sum(defined) / len(defined) if defined else None)


def scene_completion(pred: LabelVolume, gt: LabelVolume, grid: OccupancyGrid):
    """(precision, recall, iou) of non-empty vs empty on the occluded domain.

    A ratio with a zero denominator comes back as None.
    """
    return _sc_from_counts(_sc_counts(pred, gt, grid))


def semantic_iou(pred: LabelVolume, gt: LabelVolume, grid: OccupancyGrid, include_visible_free=False):
    """Per-class IoU for classes 1..11 and their mean over classes that occur.

    Returns (list of 11 values or None, average or None). A class missing
    from both prediction and ground truth on the domain is None and does not
    enter the average.
    """
    return _ssc_from_counts(_ssc_counts(pred, gt, grid, include_visible_free))


@dataclass
class EvalReport:
    sc_precision: float | None
    sc_recall: float | None
    sc_iou: float | None
    per_class_iou: list
    avg_iou: float | None

    @classmethod
    def evaluate(cls, pred, gt, grid, include_visible_free=False) -> "EvalReport":
        return cls.evaluate_many([(pred, gt, grid)], include_visible_free)

    @classmethod
    def evaluate_many(cls, triples, include_visible_free=False) -> "EvalReport":
        """Pool voxel counts over (pred, gt, grid) triples, then form the ratios."""
        sc = np.zeros(3, dtype=np.int64)
        ssc = np.zeros((NUM_CLASSES - 1, 2), dtype=np.int64)
        for pred, gt, grid in triples:
            sc += _sc_counts(pred, gt, grid)
            ssc += _ssc_counts(pred, gt, grid, include_visible_free)
        per_class, avg = _ssc_from_counts(ssc)
        return cls(*_sc_from_counts(sc), per_class, avg)

    def columns(self):
        cols = [("prec.", self.sc_precision), ("rec.", self.sc_recall), ("IoU", self.sc_iou)]
        cols += list(zip(CLASS_NAMES, self.per_class_iou))
        cols.append(("avg.", self.avg_iou))
        return cols

    def to_kv(self) -> str:
        return "".join(f"{k}={UNDEFINED if v is None else repr(float(v))}\n" for k, v in self.columns())

    @classmethod
    def from_kv(cls, text: str) -> "EvalReport":
        vals = {}
        for line in text.splitlines():
            if line.strip():
                k, v = line.split("=", 1)
                vals[k] = None if v == UNDEFINED else float(v)
        return cls(
            vals["prec."],
            vals["rec."],
            vals["IoU"],
            [vals[n] for n in CLASS_NAMES],
            vals["avg."],
        )

    def to_table(self) -> str:
        """Two-row text table in percent, scene completion then semantic columns."""
        names = [k for k, _ in self.columns()]
        cells = ["-" if v is None else f"{100 * v:.1f}" for _, v in self.columns()]
        widths = [max(len(a), len(b)) for a, b in zip(names, cells)]
        head = " ".join(n.rjust(w) for n, w in zip(names, widths))
        row = " ".join(c.rjust(w) for c, w in zip(cells, widths))
        return head + "\n" + row + "\n"
