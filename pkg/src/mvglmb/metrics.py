"""Track-set evaluation: set distances, track distances over windows, and the
volume-overlap base distance for shapes.

Set distances follow the optimal-sub-pattern-assignment construction: an
order parameter p >= 1, a cutoff c > 0, and a base distance which is either
3D Euclidean on positions or the bounded box-overlap distance on extents.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Ellipsoid, InvalidShapeError


@dataclass(frozen=True)
class Track:
    """A trajectory: per-time position and optional shape for one label."""

    label: tuple
    states: dict[int, tuple[np.ndarray, Ellipsoid | None]]

    def __post_init__(self):
        if not self.states:
            raise ValueError("track has an empty time domain")

    def times(self) -> list[int]:
        return sorted(self.states)


def track_from_positions(label, times: Sequence[int], positions: np.ndarray) -> Track:
    positions = np.asarray(positions, dtype=float)
    return Track(
        label=label,
        states={int(t): (positions[i], None) for i, t in enumerate(times)},
    )


@dataclass(frozen=True)
class OspaParams:
    order: float = 1.0
    cutoff: float = 1.0
    base: str = "euclidean3d"

    def __post_init__(self):
        if self.order < 1.0:
            raise ValueError("order must be >= 1")
        if self.cutoff <= 0.0:
            raise ValueError("cutoff must be positive")
        if self.base not in ("euclidean3d", "giou3d"):
            raise ValueError(f"unknown base distance {self.base!r}")


def assignment_min_cost(cost: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Exact minimum-cost rectangular assignment.

    Equivalent to padding the matrix square with zero-cost dummies: every
    row or column beyond the smaller dimension is left unmatched at no
    cost. Returns the matched (row, column) pairs and the total cost.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return [], 0.0
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    pairs = list(zip(rows.tolist(), cols.tolist()))
    return pairs, float(cost[rows, cols].sum())


def giou3d_distance(a: Ellipsoid, b: Ellipsoid) -> float:
    """Bounded overlap distance between two shapes' axis-aligned boxes.

    Boxes are center +/- half_lengths. The distance is (1 - G)/2 where G is
    the intersection-over-union minus the fraction of the enclosing box not
    covered by the union; it is 0 for identical boxes and at most 1.
    """
    lo_a, hi_a = a.center - a.half_lengths, a.center + a.half_lengths
    lo_b, hi_b = b.center - b.half_lengths, b.center + b.half_lengths
    va = float(np.prod(hi_a - lo_a))
    vb = float(np.prod(hi_b - lo_b))
    if va <= 0.0 or vb <= 0.0:
        raise InvalidShapeError("boxes must have positive volume")
    inter_dims = np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b)
    vi = float(np.prod(np.clip(inter_dims, 0.0, None)))
    vu = va + vb - vi
    hull_dims = np.maximum(hi_a, hi_b) - np.minimum(lo_a, lo_b)
    vh = float(np.prod(hull_dims))
    giou = vi / vu - (vh - vu) / vh
    return (1.0 - giou) / 2.0


def _base_distance(x, y, params: OspaParams) -> float:
    if params.base == "euclidean3d":
        d = float(np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)))
    else:
        d = giou3d_distance(x, y)
    return min(d, params.cutoff)


def ospa(X: Sequence, Y: Sequence, params: OspaParams) -> float:
    """Optimal sub-pattern assignment distance between two finite sets.

    Elements are 3-vectors under the Euclidean base and shapes under the
    overlap base. Returns 0 for two empty sets and the cutoff when exactly
    one is empty.
    """
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return params.cutoff
    if m > n:
        X, Y = Y, X
        m, n = n, m
    c, p = params.cutoff, params.order
    cost = np.empty((m, n))
    for i, x in enumerate(X):
        for j, y in enumerate(Y):
            cost[i, j] = _base_distance(x, y, params) ** p
    _, total = assignment_min_cost(cost)
    return float((1.0 / n * (total + c**p * (n - m))) ** (1.0 / p))


def _track_base_distance(f: Track, g: Track, window: tuple[int, int], params: OspaParams) -> float:
    """Time-averaged per-instant singleton distance over the union domain."""
    a, b = window
    dom = sorted(
        {t for t in f.states if a <= t <= b} | {t for t in g.states if a <= t <= b}
    )
    if not dom:
        return 0.0
    total = 0.0
    for t in dom:
        sf, sg = f.states.get(t), g.states.get(t)
        if sf is None or sg is None:
            total += params.cutoff
        else:
            xf = sf[0] if params.base == "euclidean3d" else sf[1]
            xg = sg[0] if params.base == "euclidean3d" else sg[1]
            total += _base_distance(xf, xg, params)
    return total / len(dom)


def ospa2(
    F: Sequence[Track], G: Sequence[Track], window: tuple[int, int], params: OspaParams
) -> float:
    """Set distance between two track sets over a time window.

    The element-level base distance is the time-averaged per-instant
    singleton distance over the union of the two tracks' domains within the
    window, which charges the full cutoff at instants where exactly one
    track exists — so identity switches and dropouts are penalized.
    """
    if window[1] < window[0]:
        raise ValueError("window must be nonempty")
    a, b = window
    Fw = [f for f in F if any(a <= t <= b for t in f.states)]
    Gw = [g for g in G if any(a <= t <= b for t in g.states)]
    m, n = len(Fw), len(Gw)
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return params.cutoff
    if m > n:
        Fw, Gw = Gw, Fw
        m, n = n, m
    c, p = params.cutoff, params.order
    cost = np.empty((m, n))
    for i, f in enumerate(Fw):
        for j, g in enumerate(Gw):
            cost[i, j] = min(_track_base_distance(f, g, window, params), c) ** p
    _, total = assignment_min_cost(cost)
    return float((1.0 / n * (total + c**p * (n - m))) ** (1.0 / p))


def sliding_ospa2(
    F: Sequence[Track],
    G: Sequence[Track],
    window_len: int = 10,
    params: OspaParams = OspaParams(),
) -> list[tuple[int, float]]:
    """Per-time track-set error over a trailing window of ``window_len``."""
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    times = sorted(
        {t for tr in list(F) + list(G) for t in tr.states}
    )
    if not times:
        return []
    out = []
    for t in range(times[0], times[-1] + 1):
        out.append((t, ospa2(F, G, (t - window_len + 1, t), params)))
    return out
