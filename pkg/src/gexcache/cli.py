"""Command-line front end: experiment orchestration, analytic queries, field
generation, and the bound-validation suite.

Exit codes: 0 success, 1 failed validation checks, 2 usage/config errors.
Errors are emitted as a single JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__, analytics, demand
from .allocate import export_allocation_csv
from .analytics import NumericError
from .config import (ConfigError, OutputOptions, PRESETS, load_config,
                     preset_config, serialize_config)
from .engine import (ExperimentConfig, allocate, config_hash, estimate_hit_multihop,
                     sweep_tradeoff, validate_bounds)
from .geometry import DomainError, PointPattern, Window, lens_area
from .pointprocess import MarkDistribution, attach_marks, place_all, sample_ppp, substream

FFMT = repr  # full round-trip decimal formatting for CSV floats


def _fail(message: str, code: int = 2) -> int:
    print(json.dumps({"error": message}), file=sys.stderr)
    return code


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _resolve_config(args) -> tuple[ExperimentConfig, OutputOptions]:
    if args.config:
        if not os.path.exists(args.config):
            raise ConfigError(f"config not found: {args.config}")
        cfg, out = load_config(args.config)
    elif args.preset:
        cfg, out = preset_config(args.preset)
    else:
        raise ConfigError("either --config or --preset is required")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("GEXCACHE_THREADS", "0")) or None
    if threads is not None:
        cfg = replace(cfg, threads=threads)
    return cfg, out


def _write_manifest(outdir: Path, cfg: ExperimentConfig, out_opts: OutputOptions,
                    files: list[str], started: str) -> None:
    manifest = {
        "config": asdict(cfg),
        "config_yaml": serialize_config(cfg, out_opts),
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "tool_version": __version__,
        "started": started,
        "finished": _now(),
        "outputs": sorted(files),
    }
    (outdir / "run_manifest.json").write_text(json.dumps(manifest, indent=2))


def _write_curves_csv(path: Path, report) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "N_target", "mean_hit", "ci_lo", "ci_hi", "mean_C", "p95_C"])
        for p in report.points:
            s = p.stats
            w.writerow([p.policy, FFMT(p.N_target), FFMT(s["mean_hit"]),
                        FFMT(s["ci_lo"]), FFMT(s["ci_hi"]),
                        FFMT(s["mean_C"]), FFMT(s["p95_C"])])


def _write_occupancy_csv(path: Path, report) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["policy", "N_target", "mean_C", "var_C", "p95_C", "eps",
                    "violation_freq"])
        for p in report.points:
            s = p.stats
            for eps, freq in s["violation_freq"].items():
                w.writerow([p.policy, FFMT(p.N_target), FFMT(s["mean_C"]),
                            FFMT(s["var_C"]), FFMT(s["p95_C"]), FFMT(float(eps)),
                            FFMT(freq)])


def cmd_simulate(args) -> int:
    cfg, out_opts = _resolve_config(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    started = _now()
    files: list[str] = []

    if args.mode == "multihop":
        rows = []
        for policy in cfg.policies:
            alloc = allocate(cfg, policy, cfg.sweep_n[0] if cfg.sweep_n else cfg.M / 4)
            est = estimate_hit_multihop(cfg, alloc, args.path_length, args.alpha)
            rows.append({"policy": policy, "K": args.path_length, "alpha": args.alpha,
                         **est})
        with open(outdir / "multihop.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["policy", "K", "alpha", "gain", "ci_lo", "ci_hi",
                        "replications_skipped"])
            for r in rows:
                w.writerow([r["policy"], r["K"], FFMT(float(r["alpha"])),
                            FFMT(r["gain"]), FFMT(r["ci_lo"]), FFMT(r["ci_hi"]),
                            r["replications_skipped"]])
        (outdir / "report.json").write_text(json.dumps(
            {"config": asdict(cfg), "config_hash": config_hash(cfg),
             "multihop": rows}, indent=2))
        files += ["multihop.csv", "report.json", "run_manifest.json"]
        _write_manifest(outdir, cfg, out_opts, files, started)
        return 0

    report = sweep_tradeoff(cfg)
    (outdir / "report.json").write_text(json.dumps(report.to_json_dict(), indent=2))
    files.append("report.json")
    _write_curves_csv(outdir / "curves.csv", report)
    files.append("curves.csv")
    if args.mode == "cache-size":
        _write_occupancy_csv(outdir / "occupancy.csv", report)
        files.append("occupancy.csv")
    if out_opts.patterns_csv:
        from .pointprocess import export_placements_csv

        for policy in cfg.policies:
            alloc = allocate(cfg, policy, cfg.sweep_n[0])
            pattern = sample_ppp(cfg.lam, cfg.window, substream(cfg.seed, 0, 1 << 20))
            mus = list(getattr(alloc.policy, "mus", [])) or MarkDistribution(0.0, 0.0)
            marked = attach_marks(pattern, mus, cfg.M, cfg.seed)
            placement = place_all(marked, alloc.policy, cfg.seed)
            name = f"patterns-{policy}.csv"
            export_placements_csv(outdir / name, marked, placement, 0,
                                  items=range(min(3, cfg.M)))
            files.append(name)
            export_allocation_csv(outdir / f"allocation-{policy}.csv", alloc)
            files.append(f"allocation-{policy}.csv")
    files.append("run_manifest.json")
    _write_manifest(outdir, cfg, out_opts, files, started)
    return 0


def cmd_validate(args) -> int:
    cfg, out_opts = _resolve_config(args)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    started = _now()
    rows = validate_bounds(cfg, N_val=args.budget)
    if args.min_margin:
        for r in rows:
            r["passed"] = bool(r["passed"] and r["margin"] >= args.min_margin)
    with open(outdir / "validation.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["check", "margin", "pass"])
        for r in rows:
            w.writerow([r["check"], FFMT(r["margin"]), str(r["passed"]).lower()])
    _write_manifest(outdir, cfg, out_opts, ["validation.csv", "run_manifest.json"],
                    started)
    failed = [r for r in rows if not r["passed"]]
    for r in failed:
        print(f"FAIL {r['check']} margin={r['margin']:.6g}")
    print(f"{len(rows) - len(failed)}/{len(rows)} checks passed")
    return 1 if failed else 0


def cmd_field(args) -> int:
    if args.preset:
        params = dict(demand.URBAN_PRESET if args.preset == "urban" else demand.RURAL_PRESET)
    else:
        if args.mu_star is None or args.sigma is None or args.range_km is None:
            raise ConfigError("--preset or all of --mu-star/--sigma/--range-km required")
        params = {"mu_star": args.mu_star, "sigma": args.sigma, "range_km": args.range_km}
    if args.sigma is not None and args.sigma <= 0:
        raise DomainError(f"sigma must be positive, got {args.sigma}")
    pixel = args.pixel_size if args.pixel_size else args.L / args.grid
    field = demand.sample_traffic_field(
        args.grid, pixel, params["mu_star"], params["sigma"],
        params["range_km"] / 3.0, args.seed)
    demand.export_field_csv(args.out, field)
    print(json.dumps({"out": str(args.out), "grid": args.grid,
                      "pixel_size": pixel, **params}))
    return 0


# ---------------------------------------------------------------------------
# analytic quantity registry
# ---------------------------------------------------------------------------


def _floats(text: str) -> np.ndarray:
    return np.array([float(t) for t in text.split(",") if t != ""])


def _matrix(text: str) -> np.ndarray:
    return np.array([[float(v) for v in row.split(",")] for row in text.split(";")])


def _pattern_from_csv(path: str, L: float) -> PointPattern:
    pts = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        ix, iy = header.index("x"), header.index("y")
        for row in rd:
            pts.append((float(row[ix]), float(row[iy])))
    return PointPattern(np.array(pts), Window(L))


_QUANTITIES: dict[str, dict] = {
    "lens-area": {
        "flags": {"r": float, "delta": float},
        "fn": lambda a: (lens_area(a.r, a.delta), None),
    },
    "matII-intensity": {
        "flags": {"lambda": float, "R": float},
        "fn": lambda a: (analytics.matII_intensity(getattr(a, "lambda"), a.R), None),
    },
    "matII-radius": {
        "flags": {"lambda": float, "p": float},
        "fn": lambda a: (analytics.matII_radius_from_prob(getattr(a, "lambda"), a.p), 1e-10),
    },
    "kernel-integral": {
        "flags": {"m": float, "n": float, "c": float},
        "fn": lambda a: (analytics.gec_spatial_kernel_integral(a.m, a.n, a.c), None),
    },
    "gec-intensity": {
        "flags": {"lambda": float, "mean": float, "scale": float, "p0": float, "c": float},
        "fn": lambda a: analytics.gec_intensity(
            getattr(a, "lambda"), MarkDistribution(a.mean, a.scale), a.p0, a.c,
            with_error=True),
    },
    "contact-indep": {
        "flags": {"lambda-th": float, "R": float},
        "fn": lambda a: (analytics.contact_indep(getattr(a, "lambda_th"), a.R), None),
    },
    "palm-matII": {
        "flags": {"r": float, "delta": float, "lambda": float},
        "fn": lambda a: (analytics.palm_matII(a.r, a.delta, getattr(a, "lambda")), None),
    },
    "palm-gec": {
        "flags": {"r": float, "mean": float, "scale": float, "lambda": float, "c": float},
        "defaults": {"c": math.inf, "scale": 1.0},
        "fn": lambda a: analytics.palm_gec(
            a.r, MarkDistribution(a.mean, a.scale), getattr(a, "lambda"), c=a.c,
            with_error=True),
    },
    "contact-matII": {
        "flags": {"lambda": float, "delta": float, "R": float},
        "fn": lambda a: (analytics.contact_from_palm(
            lambda r: analytics.palm_matII(r, a.delta, getattr(a, "lambda")),
            getattr(a, "lambda"), a.R, breakpoints=(a.delta / 2.0,)), None),
    },
    "contact-gec": {
        "flags": {"lambda": float, "mean": float, "scale": float, "R": float, "c": float},
        "defaults": {"c": math.inf, "scale": 1.0},
        "fn": lambda a: (analytics.contact_from_palm(
            lambda r: analytics.palm_gec(r, MarkDistribution(a.mean, a.scale),
                                         getattr(a, "lambda"), c=a.c),
            getattr(a, "lambda"), a.R), None),
    },
    "hit-rate": {
        "flags": {"pmf": _floats, "contacts": _floats},
        "fn": lambda a: (analytics.hit_rate(a.pmf, a.contacts), None),
    },
    "hit-variance": {
        "flags": {"pmf": _floats, "contacts": _floats},
        "fn": lambda a: (analytics.hit_variance(a.pmf, a.contacts), None),
    },
    "matII-hit-bounds": {
        "flags": {"pmf": _floats, "radii": _floats, "lambda": float, "R": float},
        "fn": lambda a: ({"lower": (rep := analytics.matII_hit_bounds(
            a.pmf, a.radii, getattr(a, "lambda"), a.R)).lower,
            "upper": rep.upper}, None),
    },
    "matII-hit-var-bound": {
        "flags": {"pmf": _floats, "radii": _floats, "lambda": float, "R": float},
        "fn": lambda a: (analytics.matII_hit_var_bound(
            a.pmf, a.radii, getattr(a, "lambda"), a.R), None),
    },
    "spatial-var-bound": {
        "flags": {"lambda": float, "r-i": float, "R": float},
        "fn": lambda a: (analytics.spatial_var_bound(getattr(a, "lambda"),
                                                     getattr(a, "r_i"), a.R), None),
    },
    "sopd-matII": {
        "flags": {"r": float, "lambda": float, "r-i": float},
        "fn": lambda a: (analytics.sopd_matII(a.r, getattr(a, "lambda"),
                                              getattr(a, "r_i")), None),
    },
    "matI-stats": {
        "flags": {"lambda": float, "r-i": float, "r": float},
        "defaults": {"r": -1.0},
        "fn": lambda a: (dict(zip(("intensity", "sopd"), analytics.matI_stats(
            getattr(a, "lambda"), getattr(a, "r_i"),
            None if a.r < 0 else a.r))), None),
    },
    "ripley-k": {
        "flags": {"pattern-csv": str, "radii": _floats, "L": float},
        "fn": lambda a: (analytics.ripley_K_estimate(
            _pattern_from_csv(getattr(a, "pattern_csv"), a.L), a.radii).tolist(), None),
    },
    "pair-correlation": {
        "flags": {"pattern-csv": str, "radii": _floats, "bandwidth": float, "L": float},
        "fn": lambda a: (analytics.pair_correlation_estimate(
            _pattern_from_csv(getattr(a, "pattern_csv"), a.L), a.radii,
            a.bandwidth).tolist(), None),
    },
    "chernoff": {
        "flags": {"N": float, "eps": float},
        "fn": lambda a: (analytics.chernoff_violation(a.N, a.eps), None),
    },
    "bernstein": {
        "flags": {"N": float, "var": float, "C": float},
        "fn": lambda a: (analytics.bernstein_violation(a.N, a.var, a.C), None),
    },
    "concave-surrogate": {
        "flags": {"z": _matrix, "weights": _floats, "pmf": _floats},
        "defaults": {"pmf": None},
        "fn": lambda a: (analytics.concave_surrogate(a.z, a.weights, a.pmf), None),
    },
    "boolean-gain": {
        "flags": {"z": _matrix, "weights": _floats, "pmf": _floats},
        "defaults": {"pmf": None},
        "fn": lambda a: (analytics.boolean_gain_exact(a.z, a.weights, a.pmf), None),
    },
    "thm3-margins": {
        "flags": {"r-values": _floats, "means": _floats, "lambda": float, "scale": float},
        "defaults": {"scale": 1.0},
        "fn": lambda a: (analytics.theorem3_margins(
            getattr(a, "r_values"), a.means, getattr(a, "lambda"),
            scale=a.scale), None),
    },
}


def cmd_analytic(args, extra: list[str]) -> int:
    name = args.quantity
    if name not in _QUANTITIES:
        print(json.dumps({"error": f"unknown quantity {name!r}",
                          "valid": sorted(_QUANTITIES)}), file=sys.stderr)
        return 2
    spec = _QUANTITIES[name]
    sub = argparse.ArgumentParser(prog=f"gexcache analytic {name}")
    defaults = spec.get("defaults", {})
    for flag, typ in spec["flags"].items():
        dest = flag.replace("-", "_")
        required = dest not in defaults
        sub.add_argument(f"--{flag}", dest=dest, type=typ, required=required,
                         default=defaults.get(dest))
    try:
        ns = sub.parse_args(extra)
    except SystemExit:
        return 2
    value, err = spec["fn"](ns)
    inputs = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
              for k, v in vars(ns).items()}
    print(json.dumps({"quantity": name, "inputs": inputs, "value": value,
                      "error_estimate": err}))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gexcache",
                                 description="spatial cache-placement simulator")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a seeded experiment")
    sim.add_argument("mode", choices=["hit-curve", "cache-size", "multihop"])
    sim.add_argument("--config")
    sim.add_argument("--preset", choices=sorted(PRESETS))
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--threads", type=int)
    sim.add_argument("--path-length", type=int, default=5)
    sim.add_argument("--alpha", type=float, default=2.0)

    val = sub.add_parser("validate", help="run the bound-validation suite")
    val.add_argument("--config")
    val.add_argument("--preset", choices=sorted(PRESETS))
    val.add_argument("--out", required=True)
    val.add_argument("--seed", type=int)
    val.add_argument("--threads", type=int)
    val.add_argument("--budget", type=float)
    val.add_argument("--min-margin", type=float, default=0.0,
                     help="additionally require every margin >= this value")

    fld = sub.add_parser("field", help="sample a traffic-density field")
    fld.add_argument("--preset", choices=["urban", "rural"])
    fld.add_argument("--mu-star", type=float, dest="mu_star")
    fld.add_argument("--sigma", type=float)
    fld.add_argument("--range-km", type=float, dest="range_km")
    fld.add_argument("--grid", type=int, default=120)
    fld.add_argument("--pixel-size", type=float, dest="pixel_size")
    fld.add_argument("--L", type=float, default=100.0)
    fld.add_argument("--seed", type=int, default=0)
    fld.add_argument("--out", required=True)

    ana = sub.add_parser("analytic", help="evaluate a closed-form quantity")
    ana.add_argument("quantity")
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    ap = build_parser()
    if argv and argv[0] == "analytic":
        # defer the per-quantity flags to a nested parser
        ns, extra = ap.parse_known_args(argv[:2])
        try:
            return cmd_analytic(ns, argv[2:])
        except (ConfigError, DomainError, FileNotFoundError) as exc:
            return _fail(str(exc), 2)
        except NumericError as exc:
            return _fail(str(exc), 1)
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "validate":
            return cmd_validate(args)
        if args.command == "field":
            return cmd_field(args)
    except (ConfigError, DomainError, FileNotFoundError) as exc:
        return _fail(str(exc), 2)
    except (NumericError, demand.FieldError) as exc:
        return _fail(str(exc), 1)
    return _fail("no command", 2)


if __name__ == "__main__":
    sys.exit(main())
