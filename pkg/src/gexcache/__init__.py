"""gexcache: spatial cache-placement simulation and analytics.

Point-process samplers with independent, hard-exclusion, and soft
(gamma-exclusion) thinnings, Zipf and traffic-field demand models,
closed-form/quadrature analytics with concentration bounds, budget
allocation, and a seeded Monte Carlo experiment engine with a CLI.
"""
from ._kernels import USING_NUMBA
from .allocate import BudgetAllocation, alloc_gec, alloc_independent, alloc_matII
from .analytics import (BoundReport, QuadratureSpec, bernstein_violation,
                        chernoff_violation, contact_from_palm, contact_indep,
                        gec_intensity, gec_spatial_kernel_integral, hit_rate,
                        hit_variance, matII_hit_bounds, matII_hit_var_bound,
                        matII_intensity, matII_radius_from_prob, matI_stats,
                        palm_gec, palm_matII, ripley_K_estimate, sopd_matII,
                        spatial_var_bound)
from .demand import (LocalDemand, TrafficField, ZipfDemand, sample_traffic_field,
                     tilt_shift, tilt_weighted, zipf_pmf)
from .engine import (ExperimentConfig, ExperimentReport, estimate_hit_boolean,
                     estimate_hit_multihop, estimate_occupancy, sweep_tradeoff,
                     validate_bounds)
from .geometry import GridIndex, PointPattern, Window, lens_area
from .pointprocess import (GammaExclusion, HardExclusion, Independent,
                           MarkDistribution, MarkedPattern, PlacementResult,
                           attach_marks, place_all, sample_ppp, thin_gec,
                           thin_independent, thin_matII)

__version__ = "0.1.0"
