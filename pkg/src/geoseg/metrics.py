"""Voxel-wise and lesion-wise evaluation metrics.

A lesion is a connected component of a binary mask (6/18/26-neighborhood,
default 26). Lesion-wise scores count components that share at least one
voxel with the other mask:

* detection rate  = matched ground-truth components / GL
* precision       = matched predicted components / PL
* their harmonic mean

The precision above is the bounded form; the literal ratio
(matched ground-truth components / PL), which can exceed 1 when one predicted
component covers several ground-truth lesions, is reported alongside it.
"""

from __future__ import annotations

import io
import csv
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .volume import BinaryMask, GridSpec, ProbabilityMap, binarize, require_same_grid

__all__ = [
    "DEFAULT_THRESHOLDS",
    "SWEEP_CSV_HEADER",
    "LabelMap",
    "LesionMetrics",
    "connected_components",
    "dsc",
    "lesion_metrics",
    "threshold_sweep",
    "metrics_dict",
    "sweep_csv",
]

DEFAULT_THRESHOLDS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
SWEEP_CSV_HEADER = "threshold,dsc,lppv,ltpr,lf1,tpr,gl,pl"

_CONNECTIVITY_RANK = {6: 1, 18: 2, 26: 3}


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Component labels 1..n_components over a grid, 0 = background."""

    grid: GridSpec
    data: np.ndarray
    n_components: int

    def __post_init__(self):
        self.data.setflags(write=False)


def connected_components(m: BinaryMask, connectivity: int = 26) -> LabelMap:
    """Label the foreground components of m.

    Labels are assigned deterministically: component 1 contains the smallest
    linear-order voxel index of any component, and so on.
    """
    if connectivity not in _CONNECTIVITY_RANK:
        raise ValueError(f"connectivity must be one of 6/18/26, got {connectivity}")
    structure = ndimage.generate_binary_structure(3, _CONNECTIVITY_RANK[connectivity])
    labels, n = ndimage.label(m.bool_data(), structure=structure)
    labels = labels.astype(np.int32)
    if n > 1:
        flat = labels.ravel(order="F")
        first = np.full(n + 1, flat.size, dtype=np.int64)
        np.minimum.at(first, flat, np.arange(flat.size))
        order = np.argsort(first[1:], kind="stable")
        remap = np.zeros(n + 1, dtype=np.int32)
        remap[order + 1] = np.arange(1, n + 1, dtype=np.int32)
        labels = remap[labels]
    return LabelMap(m.grid, labels, int(n))


def dsc(pred: BinaryMask, gt: BinaryMask) -> float:
    """Dice similarity coefficient 2|P n G| / (|P| + |G|); 1.0 if both empty."""
    require_same_grid(pred, gt)
    p, g = pred.bool_data(), gt.bool_data()
    total = int(p.sum()) + int(g.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((p & g).sum()) / total


@dataclass(frozen=True)
class LesionMetrics:
    dsc: float
    ltpr: float
    lppv: float
    lf1: float
    tpr_count: int
    gl: int
    pl: int
    lppv_literal: float


def lesion_metrics(pred: BinaryMask, gt: BinaryMask, connectivity: int = 26) -> LesionMetrics:
    """Lesion-wise detection metrics between two masks.

    Degenerate conventions keep the function total: with no predicted lesions
    the precision is 0 (1 if there are also no ground-truth lesions); with no
    ground-truth lesions the detection rate is 1 if the prediction is also
    empty, else 0; the harmonic mean is 0 when both inputs to it are 0.
    """
    require_same_grid(pred, gt)
    lp = connected_components(pred, connectivity)
    lg = connected_components(gt, connectivity)
    pl, gl = lp.n_components, lg.n_components
    pred_fg = lp.data > 0
    gt_fg = lg.data > 0
    tpr_count = int(np.unique(lg.data[pred_fg & gt_fg]).size)
    matched_pred = int(np.unique(lp.data[pred_fg & gt_fg]).size)

    if gl == 0:
        ltpr = 1.0 if pl == 0 else 0.0
    else:
        ltpr = tpr_count / gl
    if pl == 0:
        lppv = 1.0 if gl == 0 else 0.0
        lppv_literal = lppv
    else:
        lppv = matched_pred / pl
        lppv_literal = tpr_count / pl
    lf1 = 0.0 if ltpr + lppv == 0.0 else 2.0 * ltpr * lppv / (ltpr + lppv)
    return LesionMetrics(
        dsc=dsc(pred, gt),
        ltpr=ltpr,
        lppv=lppv,
        lf1=lf1,
        tpr_count=tpr_count,
        gl=gl,
        pl=pl,
        lppv_literal=lppv_literal,
    )


def threshold_sweep(
    s: ProbabilityMap,
    gt: BinaryMask,
    thresholds=DEFAULT_THRESHOLDS,
    connectivity: int = 26,
) -> list[tuple[float, LesionMetrics]]:
    """Binarize s at each threshold and score against gt; one row per threshold."""
    rows = []
    for t in thresholds:
        rows.append((float(t), lesion_metrics(binarize(s, t), gt, connectivity)))
    return rows


def metrics_dict(m: LesionMetrics, threshold: float | None = None) -> dict:
    out = {} if threshold is None else {"threshold": threshold}
    out.update(
        dsc=m.dsc,
        lppv=m.lppv,
        ltpr=m.ltpr,
        lf1=m.lf1,
        tpr=m.tpr_count,
        gl=m.gl,
        pl=m.pl,
        lppv_literal=m.lppv_literal,
    )
    return out


def sweep_csv(rows: list[tuple[float, LesionMetrics]]) -> str:
    """Render sweep rows with the fixed header threshold,dsc,lppv,ltpr,lf1,tpr,gl,pl."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_CSV_HEADER.split(","))
    for t, m in rows:
        writer.writerow([t, m.dsc, m.lppv, m.ltpr, m.lf1, m.tpr_count, m.gl, m.pl])
    return buf.getvalue()
