"""Recovery metrics: F1, thresholded ROC curves, and trapezoidal AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidInputError
from .graph import Confusion, Graph, NeighbourhoodSet, _check_rule, combine, graph_diff

DEFAULT_GRID = tuple(np.linspace(0.0, 1.0, 101))


def f1(c: Confusion) -> float:
    """F1 = 2TP / (2TP + FP + FN); the all-empty degenerate case scores 1."""
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return 2.0 * c.tp / denom


def is_degenerate(c: Confusion) -> bool:
    """True when both truth and estimate are empty, making F1 conventional."""
    return c.tp + c.fp + c.fn == 0


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    tpr: float
    fpr: float


@dataclass(frozen=True)
class RocCurve:
    """Points ordered by strictly decreasing threshold (TPR/FPR non-decreasing)."""

    points: tuple[RocPoint, ...]


def roc(
    inclusion: np.ndarray,
    truth: Graph,
    rule: str = "and",
    grid: Sequence[float] | None = None,
) -> RocCurve:
    """Sweep inclusion thresholds and score the combined graph at each one.

    A pair u~v enters the thresholded neighbourhood of v when its inclusion
    probability is at least the threshold. Rows for which a rate is undefined
    (zero-edge truth, or complete-graph truth for FPR) carry NaN.
    """
    inclusion = np.asarray(inclusion, dtype=float)
    p = truth.p
    if inclusion.shape != (p, p):
        raise InvalidInputError(
            f"inclusion matrix shape {inclusion.shape} does not match p={p}"
        )
    _check_rule(rule)
    if grid is None:
        grid = DEFAULT_GRID
    thresholds = sorted(set(float(t) for t in grid), reverse=True)
    if any(t < 0.0 or t > 1.0 for t in thresholds):
        raise InvalidInputError("thresholds must lie in [0, 1]")
    points = []
    for t in thresholds:
        neighbourhoods = [
            NeighbourhoodSet(
                v,
                frozenset(
                    u for u in range(p) if u != v and inclusion[v, u] >= t
                ),
            )
            for v in range(p)
        ]
        c = graph_diff(combine(neighbourhoods, rule), truth)
        tpr = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else math.nan
        fpr = c.fp / (c.fp + c.tn) if c.fp + c.tn > 0 else math.nan
        points.append(RocPoint(threshold=t, tpr=tpr, fpr=fpr))
    return RocCurve(points=tuple(points))


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the ROC curve; NaN if any point is degenerate."""
    if not curve.points:
        raise InvalidInputError("empty ROC curve")
    xs = [pt.fpr for pt in curve.points]
    ys = [pt.tpr for pt in curve.points]
    if any(math.isnan(x) or math.isnan(y) for x, y in zip(xs, ys)):
        return math.nan
    area = 0.0
    for i in range(1, len(xs)):
        area += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1])
    return area
