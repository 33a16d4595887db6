"""Item-popularity models: Zipf catalog demand, lognormal peak-hour traffic
fields with exponential variogram, and the exponential-tilting schemes that
turn a field value into a location-dependent request pmf.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .geometry import DomainError

__all__ = [
    "ZipfDemand",
    "TrafficField",
    "LocalDemand",
    "FieldError",
    "zipf_pmf",
    "sample_traffic_field",
    "tilt_shift",
    "tilt_weighted",
    "tilt_zipf_exponent",
    "weighted_boost_factor",
    "URBAN_PRESET",
    "RURAL_PRESET",
    "export_field_csv",
    "import_field_csv",
    "export_pmf_csv",
]

# peak-hour lognormal parameters and exponential-variogram ranges (km);
# the variogram scale is one third of the range
URBAN_PRESET = {"mu_star": 15.999, "sigma": 1.4116, "range_km": 0.0154}
RURAL_PRESET = {"mu_star": 10.2496, "sigma": 1.3034, "range_km": 1.7139}

# relative size of the diagonal jitter added before factorization
_JITTER = 1e-10
# below this nearest-pixel correlation the field is sampled as independent
# pixels; the distance to the target covariance is then < 1e-14 * sigma^2
_IID_CORR_CUTOFF = 1e-14


class FieldError(ArithmeticError):
    """Covariance factorization failed or the field is degenerate."""


def zipf_pmf(M: int, gamma_r: float) -> np.ndarray:
    """Zipf pmf p(i) = i^-gamma_r / sum_j j^-gamma_r over items 1..M."""
    if M < 1:
        raise DomainError(f"catalog size must be >= 1, got {M}")
    if gamma_r < 0:
        raise DomainError(f"Zipf exponent must be nonnegative, got {gamma_r}")
    w = np.arange(1, M + 1, dtype=np.float64) ** (-float(gamma_r))
    return w / w.sum()


@dataclass(frozen=True)
class ZipfDemand:
    """Catalog of M items with Zipf(gamma_r) popularity."""

    M: int
    gamma_r: float

    def pmf(self) -> np.ndarray:
        return zipf_pmf(self.M, self.gamma_r)


@dataclass(frozen=True)
class LocalDemand:
    """Request pmf attached to a location."""

    location: tuple[float, float]
    pmf: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.pmf, dtype=np.float64)
        object.__setattr__(self, "pmf", p)
        if (p < 0).any() or abs(p.sum() - 1.0) > 1e-12:
            raise DomainError("local demand pmf must be nonnegative and sum to 1")


@dataclass(frozen=True)
class TrafficField:
    """Lognormal traffic-density field on a square pixel lattice.

    ``log_density[i, j]`` holds log D at pixel (row i, col j); pixel centers
    are spaced ``pixel_size`` km apart and the log field targets covariance
    sigma^2 exp(-d / vario_scale).
    """

    log_density: np.ndarray
    pixel_size: float
    mu_star: float
    sigma: float
    vario_scale: float

    @property
    def n(self) -> int:
        return self.log_density.shape[0]

    def densities(self) -> np.ndarray:
        return np.exp(self.log_density)

    def region(self, row: int, col: int, size: int) -> np.ndarray:
        """Density values of the size x size pixel block at (row, col)."""
        if row < 0 or col < 0 or row + size > self.n or col + size > self.n:
            raise DomainError("region outside the field")
        return np.exp(self.log_density[row:row + size, col:col + size])


def sample_traffic_field(n: int, pixel_size: float, mu_star: float, sigma: float,
                         vario_scale: float, seed) -> TrafficField:
    """Draw one field realization: exact Gaussian sample of log D with the
    exponential covariance on the n x n pixel lattice, exponentiated.

    Dense symmetric factorization with diagonal jitter 1e-10 sigma^2.  When
    even the nearest-pixel correlation is below 1e-14 the pixels are sampled
    independently, which matches the target covariance to the same 1e-14
    accuracy without the dense factorization.
    """
    if n < 1:
        raise DomainError(f"grid size must be >= 1, got {n}")
    if sigma <= 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    if vario_scale <= 0 or pixel_size <= 0:
        raise DomainError("pixel_size and vario_scale must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = rng.standard_normal(n * n)
    if n == 1 or math.exp(-pixel_size / vario_scale) < _IID_CORR_CUTOFF:
        S = mu_star + sigma * z
    else:
        ax = (np.arange(n) + 0.5) * pixel_size
        gx, gy = np.meshgrid(ax, ax, indexing="ij")
        coords = np.column_stack([gx.ravel(), gy.ravel()])
        d = np.hypot(coords[:, None, 0] - coords[None, :, 0],
                     coords[:, None, 1] - coords[None, :, 1])
        cov = sigma * sigma * np.exp(-d / vario_scale)
        cov[np.diag_indices_from(cov)] += _JITTER * sigma * sigma
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise FieldError(f"covariance not positive definite after jitter: {exc}")
        S = mu_star + L @ z
    return TrafficField(S.reshape(n, n).astype(np.float64), pixel_size,
                        mu_star, sigma, vario_scale)


# ---------------------------------------------------------------------------
# exponential tilting
# ---------------------------------------------------------------------------


def tilt_shift(zipf: ZipfDemand | np.ndarray, D_x: float, mean_D: float) -> np.ndarray:
    """Geometric tilt p(i) ~ (D_x / mean_D)^i p_r(i), renormalized.

    Computed in log space: the raw factor overflows double precision for
    deep catalogs whenever the density ratio is meaningfully above 1.
    """
    if D_x <= 0 or mean_D <= 0:
        raise DomainError("densities must be positive")
    base = zipf.pmf() if isinstance(zipf, ZipfDemand) else np.asarray(zipf, dtype=float)
    i = np.arange(1, len(base) + 1, dtype=np.float64)
    logits = i * math.log(D_x / mean_D) + np.log(base)
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


def weighted_boost_factor(densities: np.ndarray) -> float:
    """Two-level tilt factor: mass of above-mean pixels over the remaining mass."""
    D = np.asarray(densities, dtype=float).ravel()
    if len(D) == 0 or (D <= 0).any():
        raise DomainError("densities must be positive and nonempty")
    mean = D.mean()
    above = D[D > mean].sum()
    denom = len(D) * mean - above
    if above == 0.0:
        raise FieldError("degenerate field: no pixel above the mean, boost undefined")
    if denom <= 0.0:
        raise FieldError("degenerate field: nonpositive boost denominator")
    return float(above / denom)


def tilt_weighted(zipf: ZipfDemand | np.ndarray, densities: np.ndarray) -> np.ndarray:
    """Two-level tilt: items 1..M/2 get the boost factor, the rest factor 1."""
    base = zipf.pmf() if isinstance(zipf, ZipfDemand) else np.asarray(zipf, dtype=float)
    M = len(base)
    if M % 2 != 0:
        raise DomainError(f"weighted tilt needs an even catalog size, got {M}")
    boost = weighted_boost_factor(densities)
    factors = np.ones(M)
    factors[: M // 2] = boost
    p = factors * base
    return p / p.sum()


def tilt_zipf_exponent(zipf: ZipfDemand, gamma_shift: float) -> np.ndarray:
    """Alternative tilt mode that shifts the Zipf exponent by gamma_shift.

    Provided as a separate mode; it is not equivalent to the geometric tilt.
    """
    return zipf_pmf(zipf.M, max(zipf.gamma_r + gamma_shift, 0.0))


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------


def export_field_csv(path, field: TrafficField) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "log_density"])
        for i in range(field.n):
            for j in range(field.n):
                w.writerow([i, j, repr(float(field.log_density[i, j]))])


def import_field_csv(path, pixel_size: float, mu_star: float, sigma: float,
                     vario_scale: float) -> TrafficField:
    rows = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != ["row", "col", "log_density"]:
            raise DomainError(f"unexpected field CSV header: {header}")
        for r in rd:
            rows.append((int(r[0]), int(r[1]), float(r[2])))
    n = max(r[0] for r in rows) + 1
    grid = np.full((n, n), np.nan)
    for i, j, v in rows:
        grid[i, j] = v
    if np.isnan(grid).any():
        raise DomainError("field CSV does not cover the full grid")
    return TrafficField(grid, pixel_size, mu_star, sigma, vario_scale)


def export_pmf_csv(path, pmfs: dict[int, np.ndarray]) -> None:
    """Write location-indexed pmfs as (location_id, item, probability) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location_id", "item", "probability"])
        for loc_id, pmf in pmfs.items():
            for i, p in enumerate(pmf, start=1):
                w.writerow([loc_id, i, repr(float(p))])
