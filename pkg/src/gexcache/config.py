"""Experiment configuration: a sectioned YAML document with a fixed schema.

Sections: network, demand, policy, sweep, rng, output.  Unknown sections or
keys are hard errors so that typos cannot silently corrupt an experiment.
"""
from __future__ import annotations

from dataclasses import dataclass

import yaml

from .engine import ExperimentConfig
from .geometry import DomainError

__all__ = ["ConfigError", "OutputOptions", "load_config", "parse_config",
           "serialize_config", "PRESETS", "preset_config"]


class ConfigError(ValueError):
    """Malformed configuration document."""


@dataclass(frozen=True)
class OutputOptions:
    label: str = ""
    patterns_csv: bool = False


_SCHEMA = {
    "network": {"lambda": float, "L": float, "R_dd": float},
    "demand": {"M": int, "gamma_r": float, "mode": str, "field_preset": (str, type(None)),
               "field_grid": int, "field_pixel_size": (float, type(None)),
               "field_region": int},
    "policy": {"policies": list, "indep_mode": str, "gec_mode": str, "gec_c": float,
               "gec_p0": float, "gec_scale": float, "gec_mark_coeff": float,
               "shared_weights": bool},
    "sweep": {"n_targets": list, "target_hit": float, "eps_grid": list},
    "rng": {"seed": int, "n_replications": int, "n_probes": int, "threads": int},
    "output": {"label": str, "patterns_csv": bool},
}

_REQUIRED = {"network": ("lambda",), "rng": ("seed",), "demand": ("M",)}


def _coerce(section: str, key: str, value, expected):
    if isinstance(expected, tuple):
        if value is None and type(None) in expected:
            return None
        expected = expected[0]
    if expected is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if expected is int and isinstance(value, int) and not isinstance(value, bool):
        return int(value)
    if expected is bool and isinstance(value, bool):
        return value
    if expected is str and isinstance(value, str):
        return value
    if expected is list and isinstance(value, list):
        return value
    raise ConfigError(f"{section}.{key}: expected {expected.__name__}, got {value!r}")


def parse_config(doc: dict) -> tuple[ExperimentConfig, OutputOptions]:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping of sections")
    unknown = set(doc) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    flat: dict = {}
    for section, keys in _SCHEMA.items():
        body = doc.get(section, {}) or {}
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        bad = set(body) - set(keys)
        if bad:
            raise ConfigError(f"unknown keys in section {section!r}: {sorted(bad)}")
        for key, expected in keys.items():
            if key in body:
                flat[f"{section}.{key}"] = _coerce(section, key, body[key], expected)
        for key in _REQUIRED.get(section, ()):
            if f"{section}.{key}" not in flat:
                raise ConfigError(f"missing required key {section}.{key}")

    def get(path, default):
        return flat.get(path, default)

    try:
        cfg = ExperimentConfig(
            seed=flat["rng.seed"],
            lam=flat["network.lambda"],
            L=get("network.L", 100.0),
            R_dd=get("network.R_dd", 3.0),
            M=flat["demand.M"],
            gamma_r=get("demand.gamma_r", 0.1),
            policies=tuple(get("policy.policies", ["independent", "matII", "gec"])),
            indep_mode=get("policy.indep_mode", "bernoulli"),
            gec_mode=get("policy.gec_mode", "paper"),
            gec_c=get("policy.gec_c", 10.0),
            gec_p0=get("policy.gec_p0", 1.0),
            gec_scale=get("policy.gec_scale", 1.0),
            gec_mark_coeff=get("policy.gec_mark_coeff", 0.7),
            shared_weights=get("policy.shared_weights", False),
            n_replications=get("rng.n_replications", 200),
            n_probes=get("rng.n_probes", 100),
            demand_mode=get("demand.mode", "uniform"),
            field_preset=get("demand.field_preset", None),
            field_grid=get("demand.field_grid", 120),
            field_pixel_size=get("demand.field_pixel_size", None),
            field_region=get("demand.field_region", 10),
            sweep_n=tuple(float(x) for x in get("sweep.n_targets", [])),
            eps_grid=tuple(float(x) for x in get("sweep.eps_grid", [1, 2, 3, 5, 8, 12])),
            target_hit=get("sweep.target_hit", 0.7),
            threads=get("rng.threads", 1),
        )
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    out = OutputOptions(label=get("output.label", ""),
                        patterns_csv=get("output.patterns_csv", False))
    return cfg, out


def load_config(path) -> tuple[ExperimentConfig, OutputOptions]:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    return parse_config(doc if doc is not None else {})


def serialize_config(cfg: ExperimentConfig, out: OutputOptions = OutputOptions()) -> str:
    doc = {
        "network": {"lambda": cfg.lam, "L": cfg.L, "R_dd": cfg.R_dd},
        "demand": {"M": cfg.M, "gamma_r": cfg.gamma_r, "mode": cfg.demand_mode,
                   "field_preset": cfg.field_preset, "field_grid": cfg.field_grid,
                   "field_pixel_size": cfg.field_pixel_size,
                   "field_region": cfg.field_region},
        "policy": {"policies": list(cfg.policies), "indep_mode": cfg.indep_mode,
                   "gec_mode": cfg.gec_mode, "gec_c": cfg.gec_c, "gec_p0": cfg.gec_p0,
                   "gec_scale": cfg.gec_scale, "gec_mark_coeff": cfg.gec_mark_coeff,
                   "shared_weights": cfg.shared_weights},
        "sweep": {"n_targets": list(cfg.sweep_n), "target_hit": cfg.target_hit,
                  "eps_grid": list(cfg.eps_grid)},
        "rng": {"seed": cfg.seed, "n_replications": cfg.n_replications,
                "n_probes": cfg.n_probes, "threads": cfg.threads},
        "output": {"label": out.label, "patterns_csv": out.patterns_csv},
    }
    return yaml.safe_dump(doc, sort_keys=True)


# ---------------------------------------------------------------------------
# presets (fixed seeds recorded here)
# ---------------------------------------------------------------------------

_FIG5_COMMON = {
    "network": {"lambda": 0.1, "L": 100.0},
    "demand": {"M": 100, "gamma_r": 0.1, "mode": "uniform"},
    "policy": {"policies": ["independent", "matII", "gec"]},
    "output": {"label": ""},
}


def _merge(base: dict, extra: dict) -> dict:
    out = {k: dict(v) for k, v in base.items()}
    for sec, body in extra.items():
        out.setdefault(sec, {}).update(body)
    return out


PRESETS: dict[str, dict] = {
    "fig5-R3": _merge(_FIG5_COMMON, {
        "network": {"R_dd": 3.0},
        "sweep": {"n_targets": [6, 12, 18, 24, 30, 36, 42, 48, 56, 64],
                  "target_hit": 0.7, "eps_grid": [1, 2, 3, 5, 8, 12]},
        "rng": {"seed": 93101, "n_replications": 120, "n_probes": 100, "threads": 1},
        "output": {"label": "uniform demand, R_dd=3"},
    }),
    "fig5-R10": _merge(_FIG5_COMMON, {
        "network": {"R_dd": 10.0},
        "sweep": {"n_targets": [0.75, 1.5, 2.25, 3, 4, 5, 6.5, 8, 10, 12],
                  "target_hit": 0.7, "eps_grid": [1, 2, 3, 5, 8, 12]},
        "rng": {"seed": 93102, "n_replications": 120, "n_probes": 100, "threads": 1},
        "output": {"label": "uniform demand, R_dd=10"},
    }),
    "fig7-urban-shift": _merge(_FIG5_COMMON, {
        "network": {"R_dd": 3.0},
        "demand": {"mode": "tilt_shift", "field_preset": "urban", "field_grid": 120,
                   "field_region": 10},
        "sweep": {"n_targets": [6, 12, 18, 24, 30, 36, 42, 48, 56, 64],
                  "target_hit": 0.7, "eps_grid": [1, 2, 3, 5, 8, 12]},
        "rng": {"seed": 93103, "n_replications": 120, "n_probes": 100, "threads": 1},
        "output": {"label": "urban field, geometric tilt"},
    }),
    "fig7-urban-weighted": _merge(_FIG5_COMMON, {
        "network": {"R_dd": 3.0},
        "demand": {"mode": "tilt_weighted", "field_preset": "urban", "field_grid": 120,
                   "field_region": 10},
        "sweep": {"n_targets": [6, 12, 18, 24, 30, 36, 42, 48, 56, 64],
                  "target_hit": 0.7, "eps_grid": [1, 2, 3, 5, 8, 12]},
        "rng": {"seed": 93104, "n_replications": 120, "n_probes": 100, "threads": 1},
        "output": {"label": "urban field, two-level tilt"},
    }),
    "validate-default": _merge(_FIG5_COMMON, {
        "network": {"R_dd": 3.0},
        "sweep": {"n_targets": [25], "target_hit": 0.7, "eps_grid": [1, 2, 3, 5, 8, 12]},
        "rng": {"seed": 93105, "n_replications": 150, "n_probes": 100, "threads": 1},
        "output": {"label": "bound validation"},
    }),
    "smoke": {
        "network": {"lambda": 0.1, "L": 60.0, "R_dd": 3.0},
        "demand": {"M": 5, "gamma_r": 0.1, "mode": "uniform"},
        "policy": {"policies": ["independent", "matII", "gec"]},
        "sweep": {"n_targets": [1, 2, 3], "target_hit": 0.5, "eps_grid": [1, 2]},
        "rng": {"seed": 93100, "n_replications": 10, "n_probes": 50, "threads": 1},
        "output": {"label": "smoke"},
    },
}


def preset_config(name: str) -> tuple[ExperimentConfig, OutputOptions]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; valid: {sorted(PRESETS)}")
    return parse_config(PRESETS[name])
