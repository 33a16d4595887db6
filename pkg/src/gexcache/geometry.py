"""Planar geometry primitives: observation windows, point patterns, lens areas,
and a uniform-grid index for fixed-radius neighbor queries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Window",
    "PointPattern",
    "GridIndex",
    "lens_area",
    "disc_union_area",
]


class DomainError(ValueError):
    """Argument outside the function's domain."""


@dataclass(frozen=True)
class Window:
    """Square observation window [0, L]^2 with a centered evaluation sub-window.

    The evaluation window is the middle third per side, i.e. the centered
    square of area L^2/9.  All estimators restrict to it so that boundary
    effects of the simulated pattern never reach the measured statistics.
    """

    side_length: float

    def __post_init__(self) -> None:
        if not self.side_length > 0:
            raise DomainError(f"side_length must be positive, got {self.side_length}")

    @property
    def area(self) -> float:
        return self.side_length**2

    @property
    def eval_bounds(self) -> tuple[float, float]:
        """(lo, hi) of the evaluation sub-window per axis."""
        L = self.side_length
        return (L / 3.0, 2.0 * L / 3.0)

    @property
    def eval_area(self) -> float:
        return self.area / 9.0

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return ((pts >= 0.0) & (pts <= self.side_length)).all(axis=1)

    def in_eval(self, points: np.ndarray) -> np.ndarray:
        lo, hi = self.eval_bounds
        pts = np.atleast_2d(points)
        return ((pts >= lo) & (pts <= hi)).all(axis=1)


@dataclass(frozen=True)
class PointPattern:
    """A finite planar point set together with its observation window."""

    points: np.ndarray  # (n, 2) float64
    window: Window

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        if len(pts) and not self.window.contains(pts).all():
            raise DomainError("pattern contains points outside the window")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_points(self) -> int:
        return len(self.points)

    def eval_mask(self) -> np.ndarray:
        if len(self.points) == 0:
            return np.zeros(0, dtype=bool)
        return self.window.in_eval(self.points)


def lens_area(r: float, delta: float) -> float:
    """Area of the intersection of two discs of radii ``r`` and ``delta``
    whose centers are separated by ``r``.

    Piecewise: the r-disc lies inside the delta-disc for r < delta/2; for
    r >= delta/2 (ties resolved to this branch) the standard two-chord
    formula applies.  Continuous across the seam.
    """
    if not (r > 0 and delta > 0):
        raise DomainError(f"lens_area needs positive arguments, got r={r}, delta={delta}")
    if r < delta / 2.0:
        return math.pi * r * r
    t1 = r * r * math.acos(max(-1.0, min(1.0, 1.0 - delta * delta / (2.0 * r * r))))
    t2 = delta * delta * math.acos(max(-1.0, min(1.0, delta / (2.0 * r))))
    t3 = 0.5 * delta * math.sqrt(max(4.0 * r * r - delta * delta, 0.0))
    return t1 + t2 - t3


def disc_union_area(radius: float, separation: float) -> float:
    """Area of the union of two discs of equal ``radius`` at ``separation``."""
    if radius <= 0:
        return 0.0
    if separation >= 2.0 * radius:
        return 2.0 * math.pi * radius * radius
    s = max(separation, 0.0)
    overlap = 2.0 * radius * radius * math.acos(
        max(-1.0, min(1.0, s / (2.0 * radius)))
    ) - 0.5 * s * math.sqrt(max(4.0 * radius * radius - s * s, 0.0))
    return 2.0 * math.pi * radius * radius - overlap


@dataclass
class GridIndex:
    """Uniform-grid spatial index over a point set (immutable once built).

    Points are bucketed into square cells of ``cell_size`` and stored in a
    CSR-style layout (``order``/``cell_start``) so that both the compiled
    and the plain-numpy query paths walk identical data.
    """

    points: np.ndarray
    cell_size: float
    nx: int = field(init=False)
    ny: int = field(init=False)
    order: np.ndarray = field(init=False)
    cell_start: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.points = pts
        if not self.cell_size > 0:
            raise DomainError(f"cell_size must be positive, got {self.cell_size}")
        if len(pts):
            self._xmin = float(pts[:, 0].min())
            self._ymin = float(pts[:, 1].min())
            self.nx = int((pts[:, 0].max() - self._xmin) / self.cell_size) + 1
            self.ny = int((pts[:, 1].max() - self._ymin) / self.cell_size) + 1
        else:
            self._xmin = self._ymin = 0.0
            self.nx = self.ny = 1
        cx = np.minimum(((pts[:, 0] - self._xmin) / self.cell_size).astype(np.int64), self.nx - 1)
        cy = np.minimum(((pts[:, 1] - self._ymin) / self.cell_size).astype(np.int64), self.ny - 1)
        cell_id = cx * self.ny + cy
        self.order = np.argsort(cell_id, kind="stable").astype(np.int64)
        counts = np.bincount(cell_id, minlength=self.nx * self.ny)
        self.cell_start = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        cx = int((x - self._xmin) / self.cell_size)
        cy = int((y - self._ymin) / self.cell_size)
        return cx, cy

    def neighbors_within(
        self, x: np.ndarray | tuple[float, float], rho: float, exclude: int | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """All indexed points within distance <= rho of ``x``.

        Returns (indices, distances) sorted by index.  ``exclude`` drops one
        point index (used when x is itself an indexed point).
        """
        if rho < 0:
            raise DomainError(f"rho must be nonnegative, got {rho}")
        qx, qy = float(x[0]), float(x[1])
        pts = self.points
        if len(pts) == 0:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
        reach = int(math.ceil(rho / self.cell_size))
        cx, cy = self.cell_of(qx, qy)
        found: list[np.ndarray] = []
        for ix in range(max(cx - reach, 0), min(cx + reach, self.nx - 1) + 1):
            for iy in range(max(cy - reach, 0), min(cy + reach, self.ny - 1) + 1):
                cid = ix * self.ny + iy
                seg = self.order[self.cell_start[cid]:self.cell_start[cid + 1]]
                if len(seg):
                    found.append(seg)
        if not found:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)
        cand = np.concatenate(found)
        d = np.hypot(pts[cand, 0] - qx, pts[cand, 1] - qy)
        keep = d <= rho
        if exclude is not None:
            keep &= cand != exclude
        cand, d = cand[keep], d[keep]
        srt = np.argsort(cand)
        return cand[srt], d[srt]
