"""Closed-form and quadrature-based quantities for the placement policies:
thinned intensities, conditional thinning Palm probabilities, contact
(empty-space) distributions, second-order statistics, and the hit-rate,
variance, and cache-violation bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.optimize import brentq
from scipy.stats import gamma as _gamma_dist

from .geometry import DomainError, PointPattern, lens_area, disc_union_area
from .pointprocess import MarkDistribution

__all__ = [
    "QuadratureSpec",
    "BoundReport",
    "NumericError",
    "matII_intensity",
    "matII_radius_from_prob",
    "gec_spatial_kernel_integral",
    "gec_intensity",
    "contact_indep",
    "palm_matII",
    "palm_gec",
    "contact_from_palm",
    "contact_curve",
    "hit_rate",
    "hit_variance",
    "matII_hit_bounds",
    "matII_hit_var_bound",
    "spatial_var_bound",
    "sopd_matII",
    "matI_stats",
    "ripley_K_estimate",
    "pair_correlation_estimate",
    "chernoff_violation",
    "bernstein_violation",
    "concave_surrogate",
    "boolean_gain_exact",
    "theorem3_margins",
]

PI = math.pi


class NumericError(ArithmeticError):
    """Quadrature failed to reach the requested tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for the adaptive 1-D quadratures."""

    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_depth: int = 200

    def check(self, value: float, err: float, what: str) -> None:
        if err > max(self.abs_tol, self.rel_tol * abs(value)):
            raise NumericError(f"{what}: error estimate {err:.3e} for value {value:.6e}")


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class BoundReport:
    """Lower/upper bound pair with an echo of the inputs that produced it."""

    quantity: str
    lower: float
    upper: float
    inputs: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lower > self.upper + 1e-12:
            raise DomainError(f"bound report with lower > upper: {self}")

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack


def _relax(x: float) -> float:
    """(1 - exp(-x)) / x, continuous at 0."""
    if x < 1e-8:
        return 1.0 - x / 2.0 + x * x / 6.0
    return -math.expm1(-x) / x


def _lens(r: float, delta: float) -> float:
    if r <= 0.0 or delta <= 0.0:
        return 0.0
    return lens_area(r, delta)


def _gamma_expect(fn, mu: MarkDistribution, quad: QuadratureSpec, what: str,
                  sup_bound: float = 1.0) -> tuple[float, float]:
    """E[fn(X)] for X ~ mu by adaptive quadrature on [0, mean + 12 sd].

    The truncated tail mass (bounded analytically by the gamma sf) times
    ``sup_bound`` is added to the error estimate.
    """
    if mu.scale == 0 or mu.mean == 0:
        return fn(mu.mean), 0.0
    shape = mu.shape
    dist = _gamma_dist(a=shape, scale=mu.scale)
    # at least mean + 12 sd, extended until the analytic tail bound is
    # negligible against the requested tolerance
    hi = max(mu.mean + 12.0 * math.sqrt(mu.variance), float(dist.isf(1e-13)))
    log_norm = math.lgamma(shape) + shape * math.log(mu.scale)
    inv_scale = 1.0 / mu.scale

    def integrand(x: float) -> float:
        if x <= 0.0:
            return 0.0
        log_pdf = (shape - 1.0) * math.log(x) - x * inv_scale - log_norm
        return fn(x) * math.exp(log_pdf)

    val, err = integrate.quad(
        integrand, 0.0, hi, points=[mu.mean],
        epsabs=quad.abs_tol / 100.0, epsrel=quad.rel_tol / 100.0, limit=quad.max_depth,
    )
    tail = float(dist.sf(hi)) * sup_bound
    quad.check(val, err + tail, what)
    return val, err + tail


# ---------------------------------------------------------------------------
# intensities
# ---------------------------------------------------------------------------


def matII_intensity(lam: float, R: float) -> float:
    """Retained intensity of the hard-exclusion thinning with radius R."""
    if not lam > 0:
        raise DomainError(f"intensity must be positive, got {lam}")
    if R < 0:
        raise DomainError(f"radius must be nonnegative, got {R}")
    if R == 0:
        return lam
    return lam * _relax(lam * PI * R * R)


def matII_radius_from_prob(lam: float, p_target: float, tol: float = 1e-12) -> float:
    """Exclusion radius whose retention probability lam_th/lam equals p_target."""
    if not (0 < p_target <= 1):
        raise DomainError(f"target probability must lie in (0, 1], got {p_target}")
    if p_target == 1.0:
        return 0.0
    hi = 1.0
    while matII_intensity(lam, hi) / lam > p_target:
        hi *= 2.0
        if hi > 1e9:
            raise NumericError("radius bracket failure")
    return float(brentq(lambda R: matII_intensity(lam, R) / lam - p_target,
                        1e-15, hi, xtol=tol))


def gec_spatial_kernel_integral(m: float, n: float, c: float) -> float:
    """Plane integral of the pairwise deletion kernel f(|x|, m, n):
    pi (m+n)^2 + 2 pi ((m+n)/c + 1/c^2)."""
    if m < 0 or n < 0:
        raise DomainError(f"marks must be nonnegative, got m={m}, n={n}")
    if not c > 0:
        raise DomainError(f"decay rate must be positive, got {c}")
    s = m + n
    base = PI * s * s
    if math.isinf(c):
        return base
    return base + 2.0 * PI * (s / c + 1.0 / (c * c))


def _gec_deletion_area(m: float, mu: MarkDistribution, c: float) -> float:
    """E_n[integral of f(|x|, m, n) dx] with the n-moments in closed form."""
    en1 = mu.mean
    en2 = mu.second_moment
    base = PI * (m * m + 2.0 * m * en1 + en2)
    if math.isinf(c):
        return base
    return base + 2.0 * PI * ((m + en1) / c + 1.0 / (c * c))


def gec_intensity(lam: float, mu: MarkDistribution, p0: float, c: float,
                  quad: QuadratureSpec = DEFAULT_QUAD, with_error: bool = False):
    """Retained intensity of the soft-exclusion thinning.

    lam_th = lam * p0 * E_m[(1 - exp(-lam Q(m))) / (lam Q(m))] where Q(m) is
    the mark-averaged deletion area; the inner n-average is closed form, the
    outer m-average is quadrature over the gamma law.
    """
    if not lam > 0:
        raise DomainError(f"intensity must be positive, got {lam}")
    if not (0 < p0 <= 1):
        raise DomainError(f"p0 must lie in (0, 1], got {p0}")
    val, err = _gamma_expect(
        lambda m: _relax(lam * _gec_deletion_area(m, mu, c)), mu, quad, "gec_intensity"
    )
    out = lam * p0 * val
    if with_error:
        return out, lam * p0 * err
    return out


# ---------------------------------------------------------------------------
# Palm probabilities and contact distributions
# ---------------------------------------------------------------------------


def contact_indep(lam_th: float, R: float) -> float:
    """Empty-space CDF of a PPP with intensity lam_th at radius R."""
    if lam_th < 0 or R < 0:
        raise DomainError("contact_indep needs nonnegative arguments")
    return -math.expm1(-PI * lam_th * R * R)


def palm_matII(r: float, delta: float, lam: float) -> float:
    """Survival probability of a point at distance r from an empty ball,
    under hard exclusion with radius delta."""
    if delta <= 0 or lam <= 0:
        raise DomainError("palm_matII needs positive delta and lam")
    area = PI * delta * delta - _lens(r, delta)
    if area < 1e-14:
        return 1.0
    return _relax(lam * area)


def palm_gec(r: float, mu: MarkDistribution, lam: float, c: float = math.inf,
             quad: QuadratureSpec = DEFAULT_QUAD, with_error: bool = False):
    """Survival probability of a point at distance r from an empty ball,
    under soft exclusion with mark law ``mu``.

    The neighbor-mark average of the deletion area is reduced by the lens
    overlap l2(r, n) taken at the neighbor's own mark n.  With degenerate
    marks this reduces to palm_matII only in the r -> 0 limit; the general-r
    gap is reported by the validation suite rather than patched here.
    Finite ``c`` adds the exponential tail of the deletion kernel, keeping
    the r -> 0 value consistent with gec_intensity / (lam p0).
    """
    if lam <= 0:
        raise DomainError("palm_gec needs positive lam")
    lens_avg, lens_err = _gamma_expect(
        lambda n: _lens(r, n), mu, quad, "palm_gec lens average",
        sup_bound=PI * r * r if r > 0 else 0.0,
    )

    def eta_given_m(m: float) -> float:
        q = lam * max(_gec_deletion_area(m, mu, c) - lens_avg, 0.0)
        return _relax(q)

    val, err = _gamma_expect(eta_given_m, mu, quad, "palm_gec")
    if with_error:
        return val, err + lam * lens_err
    return val


def contact_from_palm(palm_fn, lam: float, R: float,
                      quad: QuadratureSpec = DEFAULT_QUAD,
                      breakpoints=()) -> float:
    """Empty-space CDF H(R) = 1 - exp(-int_0^R 2 pi r lam eta(r) dr)."""
    if R < 0:
        raise DomainError(f"R must be nonnegative, got {R}")
    if R == 0:
        return 0.0
    pts = [b for b in breakpoints if 0 < b < R]
    val, err = integrate.quad(
        lambda r: 2.0 * PI * r * lam * palm_fn(r), 0.0, R,
        points=pts or None, epsabs=quad.abs_tol / 100.0, epsrel=quad.rel_tol / 100.0,
        limit=quad.max_depth,
    )
    quad.check(val, err, "contact_from_palm")
    return -math.expm1(-val)


def contact_curve(palm_fn, lam: float, r_grid: np.ndarray, n_sub: int = 2048) -> np.ndarray:
    """H evaluated on an increasing grid of radii.

    Integrates 2 pi r lam eta(r) cumulatively on a dense uniform mesh and
    interpolates; intended for curve/KS work where many radii are needed.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if (r_grid < 0).any():
        raise DomainError("radii must be nonnegative")
    r_max = float(r_grid.max()) if len(r_grid) else 0.0
    if r_max == 0.0:
        return np.zeros_like(r_grid)
    mesh = np.linspace(0.0, r_max, n_sub + 1)
    vals = np.array([2.0 * PI * r * lam * palm_fn(r) for r in mesh])
    cum = integrate.cumulative_trapezoid(vals, mesh, initial=0.0)
    return -np.expm1(-np.interp(r_grid, mesh, cum))


# ---------------------------------------------------------------------------
# hit rate and its bounds
# ---------------------------------------------------------------------------


def hit_rate(pmf: np.ndarray, per_item_contact: np.ndarray) -> float:
    """Popularity-weighted hit probability sum_i p(i) H_i."""
    pmf = np.asarray(pmf, dtype=float)
    H = np.asarray(per_item_contact, dtype=float)
    if pmf.shape != H.shape:
        raise DomainError("pmf and contact vectors must have the same length")
    if ((H < -1e-12) | (H > 1 + 1e-12)).any():
        raise DomainError("contact values must lie in [0, 1]")
    return float(np.dot(pmf, H))


def hit_variance(pmf: np.ndarray, per_item_contact: np.ndarray) -> float:
    """Variance sum_i p(i)^2 H_i (1 - H_i) of the hit indicator mixture."""
    pmf = np.asarray(pmf, dtype=float)
    H = np.asarray(per_item_contact, dtype=float)
    return float(np.sum(pmf**2 * H * (1.0 - H)))


def matII_hit_bounds(pmf: np.ndarray, radii: np.ndarray, lam: float, R_dd: float,
                     quad: QuadratureSpec = DEFAULT_QUAD) -> BoundReport:
    """Lower/upper bounds on the hard-exclusion average hit rate.

    Items split at r_i < R_dd.  In-range items: lower is the intensity-matched
    independent coverage; upper adds the second-order pair term
    (2 pi / lam) int_{r_i}^{R_dd} rho2(r) r dr.  Out-of-range items contribute
    exactly lam_hcp(i) pi R_dd^2 to both sides.
    """
    pmf = np.asarray(pmf, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if pmf.shape != radii.shape:
        raise DomainError("pmf and radii must have the same length")
    if R_dd < 0:
        raise DomainError(f"R_dd must be nonnegative, got {R_dd}")
    ball = PI * R_dd * R_dd
    lower = upper = 0.0
    for p, r_i in zip(pmf, radii):
        lam_h = matII_intensity(lam, r_i)
        if r_i >= R_dd:
            term = lam_h * ball
            lower += p * term
            upper += p * term
            continue
        base = -math.expm1(-lam_h * ball)
        if R_dd > r_i and r_i >= 0:
            pair_term, err = integrate.quad(
                lambda r: sopd_matII(r, lam, r_i) * r, r_i, R_dd,
                points=[2 * r_i] if 0 < 2 * r_i < R_dd else None,
                epsabs=quad.abs_tol / 100.0, epsrel=quad.rel_tol / 100.0,
                limit=quad.max_depth,
            )
            quad.check(pair_term, err, "matII_hit_bounds pair term")
            pair_term *= 2.0 * PI / lam
        else:
            pair_term = 0.0
        lower += p * base
        upper += p * min(1.0, base + pair_term)
    return BoundReport("matII_hit_rate", lower, upper,
                       {"lam": lam, "R_dd": R_dd, "n_items": len(pmf)})


def matII_hit_var_bound(pmf: np.ndarray, radii: np.ndarray, lam: float, R_dd: float) -> float:
    """Upper bound sum p^2 (1/e + pi lam p_c^2 (R_dd^2 - r_i^2)_+) on the
    hit-rate variance under hard exclusion."""
    pmf = np.asarray(pmf, dtype=float)
    radii = np.asarray(radii, dtype=float)
    p_c = np.array([matII_intensity(lam, r) / lam for r in radii])
    excess = np.maximum(R_dd**2 - radii**2, 0.0)
    return float(np.sum(pmf**2 * (1.0 / math.e + PI * lam * p_c**2 * excess)))


def spatial_var_bound(lam: float, r_i: float, R_dd: float) -> float:
    """Large-ball bound lam_hcp pi R_dd^2 exp(-lam pi r_i^2) on the count
    variance of a hard-exclusion child process."""
    if R_dd < 0 or r_i < 0:
        raise DomainError("spatial_var_bound needs nonnegative radii")
    return matII_intensity(lam, r_i) * PI * R_dd**2 * math.exp(-lam * PI * r_i**2)


# ---------------------------------------------------------------------------
# second-order product densities and summary statistics
# ---------------------------------------------------------------------------


def sopd_matII(r: float, lam: float, r_i: float) -> float:
    """Second-order product density of the hard-exclusion child process."""
    if r < 0:
        raise DomainError(f"r must be nonnegative, got {r}")
    if r_i == 0:
        return lam * lam
    if r <= r_i:
        return 0.0
    lam_h = matII_intensity(lam, r_i)
    if r >= 2.0 * r_i:
        return lam_h * lam_h
    A = PI * r_i * r_i
    V = disc_union_area(r_i, r)
    x, y = lam * A, lam * V
    if x < 1e-5:
        # series form avoids the structural cancellation of the direct
        # difference at small lam * area
        return lam * lam * (1.0 - lam * (A + V) / 3.0)
    num = 2.0 * V * (-math.expm1(-x)) - 2.0 * A * (-math.expm1(-y))
    den = A * V * (V - A)
    return num / den


def matI_stats(lam: float, r_i: float, r: float | None = None):
    """Intensity (and optionally SOPD at separation r) of the type-I
    hard-core thinning, where any pair closer than r_i deletes both."""
    if lam <= 0 or r_i < 0:
        raise DomainError("matI_stats needs lam > 0 and r_i >= 0")
    intensity = lam * math.exp(-lam * PI * r_i * r_i)
    if r is None:
        return intensity, None
    if r < r_i:
        return intensity, 0.0
    sopd = lam * lam * math.exp(-lam * disc_union_area(r_i, r))
    return intensity, sopd


def ripley_K_estimate(pattern: PointPattern, radii) -> np.ndarray:
    """Minus-sampling Ripley K: anchors restricted to the evaluation window,
    neighbors taken from the full pattern."""
    radii = np.asarray(radii, dtype=float)
    pts = pattern.points
    n = len(pts)
    lam_hat = n / pattern.window.area
    anchors = np.flatnonzero(pattern.eval_mask())
    if len(anchors) < 2 or n < 2:
        raise DomainError("insufficient data: need at least two points in the evaluation window")
    if radii.max() > pattern.window.side_length / 3.0:
        raise DomainError("minus-sampling requires max radius <= L/3")
    d = np.hypot(
        pts[anchors, None, 0] - pts[None, :, 0],
        pts[anchors, None, 1] - pts[None, :, 1],
    )
    d[np.arange(len(anchors)), anchors] = np.inf  # exclude self-pairs
    counts = (d[:, :, None] <= radii[None, None, :]).sum(axis=1)
    return counts.mean(axis=0) / lam_hat


def pair_correlation_estimate(pattern: PointPattern, r_grid, bandwidth: float) -> np.ndarray:
    """Annulus-count estimate of the pair correlation g(r) with minus sampling."""
    r_grid = np.asarray(r_grid, dtype=float)
    pts = pattern.points
    n = len(pts)
    lam_hat = n / pattern.window.area
    anchors = np.flatnonzero(pattern.eval_mask())
    if len(anchors) < 2 or n < 2:
        raise DomainError("insufficient data for the pair-correlation estimate")
    d = np.hypot(
        pts[anchors, None, 0] - pts[None, :, 0],
        pts[anchors, None, 1] - pts[None, :, 1],
    )
    d[np.arange(len(anchors)), anchors] = np.inf
    out = np.empty_like(r_grid)
    for k, r in enumerate(r_grid):
        lo, hi = max(r - bandwidth, 0.0), r + bandwidth
        area = PI * (hi * hi - lo * lo)
        counts = ((d > lo) & (d <= hi)).sum(axis=1)
        out[k] = counts.mean() / (lam_hat * area)
    return out


# ---------------------------------------------------------------------------
# cache-violation bounds and the concave surrogate
# ---------------------------------------------------------------------------


def chernoff_violation(N: float, eps: float) -> float:
    """Chernoff bound exp(eps - (N + eps) log(1 + eps/N)) on
    P(occupancy > N + eps)."""
    if N <= 0:
        raise DomainError(f"mean occupancy must be positive, got {N}")
    if eps < 0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    if eps == 0:
        return 1.0
    return min(1.0, math.exp(eps - (N + eps) * math.log1p(eps / N)))


def bernstein_violation(N: float, var: float, C: float) -> float:
    """Bernstein bound exp(-(C-N)^2 / (var + (C-N)/3)) on P(occupancy > C)."""
    if var < 0:
        raise DomainError(f"variance must be nonnegative, got {var}")
    if C < N:
        raise DomainError(f"threshold C={C} below the mean N={N}")
    gap = C - N
    if gap == 0:
        return 1.0
    return min(1.0, math.exp(-gap * gap / (var + gap / 3.0)))


def concave_surrogate(Z: np.ndarray, link_weights: np.ndarray,
                      pmf: np.ndarray | None = None) -> float:
    """Concave relaxation of the path caching gain:
    sum_i p(i) sum_k w_k min(1, sum_{l<=k} z[l, i])."""
    Z = np.asarray(Z, dtype=float)
    w = np.asarray(link_weights, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != len(w):
        raise DomainError("Z must be (n_links, n_items) matching link_weights")
    pmf = np.full(Z.shape[1], 1.0 / Z.shape[1]) if pmf is None else np.asarray(pmf, dtype=float)
    cum = np.minimum(1.0, np.cumsum(Z, axis=0))
    return float(np.einsum("k,ki,i->", w, cum, pmf))


def boolean_gain_exact(Z: np.ndarray, link_weights: np.ndarray,
                       pmf: np.ndarray | None = None) -> float:
    """Exact path caching gain sum_i p(i) sum_k w_k (1 - prod_{l<=k}(1 - z[l, i]))."""
    Z = np.asarray(Z, dtype=float)
    w = np.asarray(link_weights, dtype=float)
    pmf = np.full(Z.shape[1], 1.0 / Z.shape[1]) if pmf is None else np.asarray(pmf, dtype=float)
    miss = np.cumprod(1.0 - Z, axis=0)
    return float(np.einsum("k,ki,i->", w, 1.0 - miss, pmf))


# ---------------------------------------------------------------------------
# ordering diagnostics
# ---------------------------------------------------------------------------


def theorem3_margins(r_values, means, lam: float, scale: float = 1.0,
                     c: float = math.inf,
                     quad: QuadratureSpec = DEFAULT_QUAD) -> list[dict]:
    """Margins palm_gec(r, mu) - palm_matII(r, E[m1 + m2]) over a grid.

    The soft-exclusion Palm probability is compared against the hard
    exclusion whose radius matches the mean pairwise mark sum 2 E[m].
    Negative margins mean the claimed mixture advantage fails there.
    """
    rows = []
    for mean in means:
        mu = MarkDistribution(mean, scale)
        for r in r_values:
            eg = palm_gec(r, mu, lam, c=c, quad=quad)
            em = palm_matII(r, 2.0 * mean, lam)
            rows.append({
                "r": float(r), "mark_mean": float(mean), "palm_gec": eg,
                "palm_matII_matched": em, "margin": eg - em,
            })
    return rows
