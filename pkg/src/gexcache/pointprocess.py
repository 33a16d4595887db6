"""Samplers and dependent thinnings for the cache-placement point processes.

The mother process is a homogeneous PPP on a square window.  Three placement
policies thin it into per-item child processes:

* ``Independent`` - Bernoulli retention per point, per item.
* ``HardExclusion`` - keep a point iff it has the locally smallest weight
  within a fixed per-item exclusion radius (Matern type-II rule).
* ``GammaExclusion`` - soft pairwise deletion: a point with weight v takes a
  factor (1 - f(d, m, n)) from every lower-weight point at distance d, where
  f(d, m, n) = exp(-c * max(d - m - n, 0)) and the radius marks m, n are
  gamma distributed; the point then survives an independent Bernoulli with
  the resulting product probability (scaled by p0).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import DomainError, GridIndex, PointPattern, Window

__all__ = [
    "MarkDistribution",
    "MarkedPattern",
    "Independent",
    "HardExclusion",
    "GammaExclusion",
    "PlacementResult",
    "sample_ppp",
    "attach_marks",
    "thin_independent",
    "thin_matII",
    "thin_gec",
    "place_all",
    "export_placements_csv",
]

# pairwise factors with f below this are dropped; the neglected log-mass is
# bounded by n_points * 1e-12 per point
PAIR_EPS = 1e-12
PAIR_CUT = math.log(1.0 / PAIR_EPS)

STREAM_WEIGHTS = 0
STREAM_MARKS = 1
STREAM_BERNOULLI = 2
STREAM_PATTERN = 1 << 20
STREAM_PROBES = (1 << 20) + 1
STREAM_REGION = (1 << 20) + 2


def substream(seed: int, *key: int) -> np.random.Generator:
    """Deterministic child generator keyed on (seed, *key).

    Philox is counter based, so streams derived from distinct keys are
    independent and reproducible regardless of scheduling order.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class MarkDistribution:
    """Gamma law for exclusion-radius marks, canonical (mean, scale) form.

    shape = mean / scale so that E[m] = mean and Var[m] = mean * scale.
    ``scale == 0`` is the degenerate point mass at ``mean``.
    """

    mean: float
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.mean < 0 or self.scale < 0:
            raise DomainError(f"mark law needs mean, scale >= 0, got {self}")

    @property
    def shape(self) -> float:
        if self.scale == 0:
            return math.inf
        return self.mean / self.scale

    @property
    def variance(self) -> float:
        return self.mean * self.scale

    @property
    def second_moment(self) -> float:
        return self.mean**2 + self.variance

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.scale == 0 or self.mean == 0:
            return np.full(n, self.mean, dtype=np.float64)
        return rng.gamma(self.mean / self.scale, self.scale, size=n)

    def quantile_upper(self, tail: float = 1e-12) -> float:
        """Upper bound holding all but ``tail`` of the mass (used for pair cutoffs)."""
        if self.scale == 0 or self.mean == 0:
            return self.mean
        from scipy.stats import gamma as _g

        return float(_g.isf(tail, a=self.mean / self.scale, scale=self.scale))


@dataclass(frozen=True)
class MarkedPattern:
    """A point pattern with per (point, item) bivariate marks.

    ``radii[k, i]`` is the exclusion-radius mark of point k for item i and
    ``weights[k, i]`` its thinning priority (i.i.d. U[0,1] unless the shared
    weights switch is on, in which case columns are identical).
    """

    base: PointPattern
    radii: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.base)
        if self.radii.shape != self.weights.shape or self.radii.shape[0] != n:
            raise DomainError(
                f"marks shape {self.radii.shape}/{self.weights.shape} does not "
                f"match pattern size {n}"
            )

    @property
    def n_items(self) -> int:
        return self.radii.shape[1]


@dataclass(frozen=True)
class Independent:
    """Bernoulli placement with per-item probabilities."""

    p_c: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.p_c, dtype=np.float64)
        object.__setattr__(self, "p_c", p)
        if ((p < 0) | (p > 1)).any():
            raise DomainError("independent probabilities must lie in [0, 1]")

    @property
    def n_items(self) -> int:
        return len(self.p_c)


@dataclass(frozen=True)
class HardExclusion:
    """Matern-II placement with per-item exclusion radii."""

    radii: np.ndarray

    def __post_init__(self) -> None:
        r = np.asarray(self.radii, dtype=np.float64)
        object.__setattr__(self, "radii", r)
        if (r < 0).any():
            raise DomainError("exclusion radii must be nonnegative")

    @property
    def n_items(self) -> int:
        return len(self.radii)


@dataclass(frozen=True)
class GammaExclusion:
    """Soft exclusion placement with per-item gamma mark laws."""

    mus: tuple[MarkDistribution, ...]
    p0: float = 1.0
    c: float = 10.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "mus", tuple(self.mus))
        if not (0 < self.p0 <= 1):
            raise DomainError(f"p0 must lie in (0, 1], got {self.p0}")
        if not self.c > 0:
            raise DomainError(f"decay rate c must be positive, got {self.c}")

    @property
    def n_items(self) -> int:
        return len(self.mus)


PlacementPolicy = Independent | HardExclusion | GammaExclusion


@dataclass(frozen=True)
class PlacementResult:
    """Binary cache-content matrix and the per-item retained index sets."""

    z: np.ndarray  # (n_points, n_items) uint8

    @property
    def n_items(self) -> int:
        return self.z.shape[1]

    def retained(self, item: int) -> np.ndarray:
        return np.flatnonzero(self.z[:, item])

    def occupancy(self) -> np.ndarray:
        """Per-node cache occupancy C(x) = sum_i z[x, i]."""
        return self.z.sum(axis=1).astype(np.int64)


def sample_ppp(lam: float, window: Window, seed) -> PointPattern:
    """Homogeneous PPP of intensity ``lam`` on the window, seeded."""
    if not lam > 0:
        raise DomainError(f"intensity must be positive, got {lam}")
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, STREAM_PATTERN)
    n = rng.poisson(lam * window.area)
    pts = rng.uniform(0.0, window.side_length, size=(int(n), 2))
    return PointPattern(pts, window)


def attach_marks(
    pattern: PointPattern,
    mus,
    n_items: int,
    seed,
    shared_weights: bool = False,
) -> MarkedPattern:
    """Draw per (point, item) radius marks from the per-item laws and
    independent U[0,1] weights.

    ``mus`` may be a single MarkDistribution (used for every item) or a
    sequence of length ``n_items``.
    """
    if n_items < 1:
        raise DomainError(f"n_items must be >= 1, got {n_items}")
    if isinstance(mus, MarkDistribution):
        mus = [mus] * n_items
    if len(mus) != n_items:
        raise DomainError(f"need {n_items} mark laws, got {len(mus)}")
    n = len(pattern)
    radii = np.empty((n, n_items), dtype=np.float64)
    weights = np.empty((n, n_items), dtype=np.float64)
    for i, mu in enumerate(mus):
        rng_i = seed if isinstance(seed, np.random.Generator) else substream(seed, i, STREAM_MARKS)
        radii[:, i] = mu.sample(n, rng_i)
        if not shared_weights:
            rng_w = seed if isinstance(seed, np.random.Generator) else substream(seed, i, STREAM_WEIGHTS)
            weights[:, i] = rng_w.uniform(size=n)
    if shared_weights:
        rng_w = seed if isinstance(seed, np.random.Generator) else substream(seed, 0, STREAM_WEIGHTS)
        weights[:] = rng_w.uniform(size=n)[:, None]
    return MarkedPattern(pattern, radii, weights)


# ---------------------------------------------------------------------------
# pair machinery shared by the thinnings
# ---------------------------------------------------------------------------


def build_pairs(pattern: PointPattern, rmax: float):
    """All unordered point pairs at distance <= rmax, as (i, j, d) arrays."""
    n = len(pattern)
    if n < 2 or rmax <= 0:
        z = np.empty(0, dtype=np.int64)
        return z, z.copy(), np.empty(0, dtype=np.float64)
    cell = min(max(rmax, 1e-9), pattern.window.side_length)
    index = GridIndex(pattern.points, cell)
    return _kernels.pairs_within(*_kernels.grid_args(index), rmax)


def gec_pair_radius(marks: np.ndarray, c: float) -> float:
    """Interaction radius covering every pair factor above PAIR_EPS."""
    if len(marks) == 0:
        return 0.0
    return 2.0 * float(marks.max()) + PAIR_CUT / c


def _matII_keep(pairs, weights: np.ndarray, r_excl: float, n: int) -> np.ndarray:
    pi, pj, pd = pairs
    return _kernels.thin_matII_kernel(pi, pj, pd, weights, float(r_excl), n).astype(bool)


def _gec_keep(pairs, marks, weights, p0, c, rng) -> np.ndarray:
    pi, pj, pd = pairs
    n = len(marks)
    logp = _kernels.gec_log_retention(pi, pj, pd, marks, weights, float(c), n)
    p = p0 * np.exp(logp)
    return rng.uniform(size=n) < p


# ---------------------------------------------------------------------------
# public thinning operations
# ---------------------------------------------------------------------------


def thin_independent(pattern: PointPattern, p: float, seed) -> np.ndarray:
    """Independent Bernoulli(p) thinning; returns retained point indices."""
    if not (0 <= p <= 1):
        raise DomainError(f"retention probability must lie in [0, 1], got {p}")
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, 0, STREAM_BERNOULLI)
    keep = rng.uniform(size=len(pattern)) < p
    return np.flatnonzero(keep)


def thin_matII(marked: MarkedPattern, item: int, r_excl: float) -> np.ndarray:
    """Hard-exclusion thinning of one item's marked pattern.

    A point survives iff every other point within ``r_excl`` has a strictly
    larger weight (ties broken toward the lower point index).
    """
    if r_excl < 0:
        raise DomainError(f"exclusion radius must be nonnegative, got {r_excl}")
    n = len(marked.base)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if r_excl == 0:
        return np.arange(n, dtype=np.int64)
    pairs = build_pairs(marked.base, r_excl)
    keep = _matII_keep(pairs, marked.weights[:, item], r_excl, n)
    return np.flatnonzero(keep)


def thin_gec(marked: MarkedPattern, item: int, p0: float, c: float, seed) -> np.ndarray:
    """Soft-exclusion thinning of one item's marked pattern.

    Computes each point's retention probability
    ``p0 * prod over lower-weight neighbors (1 - f(d, m, n))`` with the pair
    product truncated at factors below 1e-12, then retains by independent
    Bernoulli draws.
    """
    if not (0 < p0 <= 1):
        raise DomainError(f"p0 must lie in (0, 1], got {p0}")
    if not c > 0:
        raise DomainError(f"decay rate c must be positive, got {c}")
    n = len(marked.base)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    rng = seed if isinstance(seed, np.random.Generator) else substream(seed, item, STREAM_BERNOULLI)
    marks = np.ascontiguousarray(marked.radii[:, item])
    weights = np.ascontiguousarray(marked.weights[:, item])
    pairs = build_pairs(marked.base, gec_pair_radius(marks, c))
    keep = _gec_keep(pairs, marks, weights, p0, c, rng)
    return np.flatnonzero(keep)


def place_all(marked: MarkedPattern, policy: PlacementPolicy, seed) -> PlacementResult:
    """Apply the policy's thinning independently per item and fill the
    cache-content matrix z[point, item]."""
    n = len(marked.base)
    M = marked.n_items
    if policy.n_items != M:
        raise DomainError(
            f"policy has {policy.n_items} items but the marked pattern has {M}"
        )
    z = np.zeros((n, M), dtype=np.uint8)
    if n == 0:
        return PlacementResult(z)
    if isinstance(policy, Independent):
        for i in range(M):
            rng = substream(seed, i, STREAM_BERNOULLI)
            z[:, i] = rng.uniform(size=n) < policy.p_c[i]
        return PlacementResult(z)
    if isinstance(policy, HardExclusion):
        rmax = float(policy.radii.max())
        pairs = build_pairs(marked.base, rmax)
        for i in range(M):
            if policy.radii[i] == 0:
                z[:, i] = 1
            else:
                z[:, i] = _matII_keep(pairs, marked.weights[:, i], policy.radii[i], n)
        return PlacementResult(z)
    # GammaExclusion
    rmax = 2.0 * float(marked.radii.max()) + PAIR_CUT / policy.c
    pairs = build_pairs(marked.base, rmax)
    for i in range(M):
        rng = substream(seed, i, STREAM_BERNOULLI)
        marks = np.ascontiguousarray(marked.radii[:, i])
        weights = np.ascontiguousarray(marked.weights[:, i])
        z[:, i] = _gec_keep(pairs, marks, weights, policy.p0, policy.c, rng)
    return PlacementResult(z)


def export_placements_csv(path, marked: MarkedPattern, result: PlacementResult,
                          replication: int = 0, items=None) -> None:
    """Write per-point realization rows
    (replication, item, x, y, mark_radius, weight, retained)."""
    items = range(marked.n_items) if items is None else items
    pts = marked.base.points
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replication", "item", "x", "y", "mark_radius", "weight", "retained"])
        for i in items:
            for k in range(len(pts)):
                w.writerow([
                    replication, i,
                    repr(float(pts[k, 0])), repr(float(pts[k, 1])),
                    repr(float(marked.radii[k, i])), repr(float(marked.weights[k, i])),
                    int(result.z[k, i]),
                ])
