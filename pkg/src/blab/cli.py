"""Command-line front end: ``blab map | orbits | p3 | fractal``.

Every command reads one JSON config file; ``--seed``, ``--out`` and
``--threads`` override it.  ``--out`` names an output directory.  Outputs
carry the SHA-256 of the effective config (without output location and
thread count, which never change results), so identical configs give
byte-identical files.

Exit codes: 0 success, 1 usage/config/data error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fixtures
from .boundary import build_curve
from .dynamics import PhasePoint, trace
from .errors import DataError, GrazingIntersection, InvalidDescriptor, NumericalFailure, TooFewPoints
from .fractal import PointCloud, angular_density, box_dimension, density, tangent_test
from .orbits import (dt3_defect_batch, fermat_defect, find_period3, identity_diagnostics,
                     sample_p3_points, wojtkowski_residual)
from .parallel import default_threads

TANGENT_SAMPLES = 50
MIN_CLOUD = 100

DEFAULTS = {
    "map": {"steps": 10},
    "orbits": {"n_seeds": 64},
    "p3": {"grid_t": 1024, "grid_theta": 16, "tol": 1e-9, "identity_check": True},
    "fractal": {"n_scales": 6, "s": 1.0, "eta_grid": [0.05, 0.1, 0.2], "threshold": 0.05,
                "points": [], "sectors": []},
}


class ConfigError(ValueError):
    pass


# formatting ---------------------------------------------------------------------

def fmt(x) -> str:
    return format(float(x), ".17g")


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def write_csv(path: Path, digest: str, header, rows):
    lines = [f"# config_sha256={digest}", ",".join(header)]
    lines += [",".join(v if isinstance(v, str) else fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, payload: dict):
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def read_cloud_csv(path) -> np.ndarray:
    """Read ``x,y`` rows; ``#`` lines and an optional ``x,y`` header are skipped."""
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = [p.strip() for p in text.split(",")]
            if not rows and parts == ["x", "y"]:
                continue
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 columns, got {len(parts)}")
            try:
                x, y = float(parts[0]), float(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number: {text!r}") from None
            if not (math.isfinite(x) and math.isfinite(y)):
                raise DataError(f"{path}:{lineno}: non-finite coordinate")
            rows.append((x, y))
    if not rows:
        raise TooFewPoints(f"{path}: no data rows")
    return np.array(rows)


# config ---------------------------------------------------------------------------

def load_config(command: str, path, seed=None) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    config = dict(DEFAULTS[command])
    config.update(raw)
    config.pop("output_path", None)
    config.setdefault("rng_seed", 0)
    if seed is not None:
        config["rng_seed"] = seed
    if command != "fractal" and "boundary" not in config:
        raise ConfigError("config needs a 'boundary' descriptor")
    return config


def _require(config, *keys):
    missing = [k for k in keys if k not in config]
    if missing:
        raise ConfigError(f"config is missing {', '.join(missing)}")


def _int(config, key, minimum):
    value = config[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}")
    return value


# commands -----------------------------------------------------------------------------

def cmd_map(config, out: Path, threads: int):
    _require(config, "t", "theta")
    curve = build_curve(config["boundary"])
    steps = _int(config, "steps", 1)
    try:
        p = PhasePoint.on(curve, float(config["t"]), float(config["theta"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = trace(curve, p, steps)
    path = out / "trace.csv"
    write_csv(path, config_digest(config), ["step", "t", "theta", "chord"],
              [(str(r[0]), r[1], r[2], r[3]) for r in rows])
    return [path]


def cmd_orbits(config, out: Path, threads: int):
    curve = build_curve(config["boundary"])
    n_seeds = _int(config, "n_seeds", 1)
    orbits = find_period3(curve, n_seeds, int(config["rng_seed"]), threads=threads)
    report = []
    if orbits:
        t0 = np.array([o.t[0] for o in orbits])
        th0 = np.array([o.theta[0] for o in orbits])
        defects, _ = dt3_defect_batch(curve, t0, th0)
    for o, defect in zip(orbits, defects if orbits else []):
        try:
            fermat = fermat_defect(curve, o)
        except NumericalFailure:
            fermat = None
        report.append({
            "t": list(o.t), "theta": list(o.theta), "perimeter": o.perimeter,
            "classification": o.classification, "gradient_norm": o.gradient_norm,
            "dt3_defect": defect, "wojtkowski_residual": wojtkowski_residual(curve, o),
            "fermat_defect": fermat,
        })
    path = out / "orbits.json"
    write_json(path, {"config_digest": config_digest(config), "orbits": report})
    return [path]


def _tangent_summary(cloud, s=1.0, eta_grid=(0.05, 0.1, 0.2), threshold=0.05):
    n = len(cloud)
    idx = np.unique(np.round(np.linspace(0, n - 1, min(TANGENT_SAMPLES, n))).astype(int))
    reports = []
    for i in idx:
        rep = tangent_test(cloud, cloud.points[i], s=s, eta_grid=eta_grid, threshold=threshold)
        reports.append({"point": cloud.points[i].tolist(), **rep.to_json()})
    found = sum(r["has_tangent"] for r in reports)
    return {"sampled": len(reports), "with_tangent": found,
            "fraction": found / len(reports) if reports else 0.0, "reports": reports}


def cmd_p3(config, out: Path, threads: int):
    curve = build_curve(config["boundary"])
    grid_t, grid_theta = _int(config, "grid_t", 8), _int(config, "grid_theta", 8)
    tol = float(config["tol"])
    if not tol > 0:
        raise ConfigError("tol must be positive")
    t, th = sample_p3_points(curve, grid_t, grid_theta, tol, threads=threads)
    scaled = t * (2 * math.pi / curve.length)
    digest = config_digest(config)
    cloud_path = out / "p3_cloud.csv"
    write_csv(cloud_path, digest, ["t_scaled", "theta"], zip(scaled, th))

    analysis = {"config_digest": digest, "n_points": int(t.size), "boundary_length": curve.length}
    if config.get("identity_check", True) and t.size:
        defect, residual, ok = identity_diagnostics(curve, t, th)
        flat = ok & (defect < 1e-6)
        analysis["identity"] = {
            "evaluated": int(ok.sum()),
            "points_with_flat_dt3": int(flat.sum()),
            "max_abs_residual_where_flat": float(np.abs(residual[flat]).max()) if flat.any() else None,
            "min_dt3_defect": float(np.nanmin(defect)) if ok.any() else None,
        }
    if t.size >= MIN_CLOUD:
        cloud = PointCloud(np.stack([scaled, th], axis=1))
        analysis["isolated"] = False
        analysis["box_dimension"] = box_dimension(cloud).to_json()
        analysis["tangents"] = _tangent_summary(cloud)
    else:
        message = f"isolated points: {t.size} < {MIN_CLOUD}, dimension analysis skipped"
        print(f"warning: {message}", file=sys.stderr)
        analysis["isolated"] = True
        analysis["warning"] = message
        analysis["box_dimension"] = None
    analysis_path = out / "p3_analysis.json"
    write_json(analysis_path, analysis)
    return [cloud_path, analysis_path]


def cmd_fractal(config, out: Path, threads: int):
    _require(config, "input")
    data = Path(config["input"]).read_bytes() if Path(config["input"]).is_file() else None
    if data is None:
        raise ConfigError(f"input cloud {config['input']} does not exist")
    points = read_cloud_csv(config["input"])
    cloud = PointCloud(points)
    # digest the data rather than where it happens to live
    digest_config = dict(config, input=hashlib.sha256(data).hexdigest())
    digest = config_digest(digest_config)
    s = float(config["s"])
    eta_grid = [float(e) for e in config["eta_grid"]]
    threshold = float(config["threshold"])
    radii = config.get("radii")
    mass_scale = config.get("mass_scale")

    result = {"config_digest": digest, "n_points": len(cloud),
              "box_dimension": box_dimension(cloud, _int(config, "n_scales", 4)).to_json()}
    per_point = []
    for p in config["points"]:
        p = np.asarray(p, dtype=float)
        r = np.asarray(radii, dtype=float) if radii is not None else None
        entry = {"point": p.tolist()}
        if r is not None:
            entry["density"] = list(density(cloud, p, s, r, mass_scale))
            entry["angular"] = [
                {"gamma": sec["gamma"], "eta": sec["eta"],
                 "value": angular_density(cloud, p, s, sec["gamma"], sec["eta"], r, mass_scale)}
                for sec in config["sectors"]]
        entry["tangent"] = tangent_test(cloud, p, s, eta_grid, r, threshold).to_json()
        per_point.append(entry)
    result["points"] = per_point
    if config.get("tangent_summary", False) and len(cloud) >= MIN_CLOUD:
        result["tangents"] = _tangent_summary(cloud, s, eta_grid, threshold)
    path = out / "fractal.json"
    write_json(path, result)
    return [path]


def make_fixture(name: str, out: Path):
    if name not in fixtures.FIXTURES:
        raise ConfigError(f"unknown fixture {name!r}; choose from {sorted(fixtures.FIXTURES)}")
    pts = fixtures.FIXTURES[name]()
    path = out / f"{name}.csv"
    digest = config_digest({"fixture": name})
    write_csv(path, digest, ["x", "y"], pts)
    return [path]


COMMANDS = {"map": cmd_map, "orbits": cmd_orbits, "p3": cmd_p3, "fractal": cmd_fractal}


def build_parser():
    parser = argparse.ArgumentParser(prog="blab", description="Planar billiard experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"map": "iterate the billiard map and write a trace CSV",
             "orbits": "find three-periodic orbits by perimeter criticality",
             "p3": "sample fixed points of T^3 and analyse the resulting cloud",
             "fractal": "dimension, density and tangent estimates for an x,y cloud"}
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text)
        sp.add_argument("config", nargs="?", help="JSON config file")
        sp.add_argument("--seed", type=int, help="override rng_seed")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--threads", type=int, help="worker threads (default: BLAB_THREADS or CPU count)")
        if name == "fractal":
            sp.add_argument("--make-fixture", choices=sorted(fixtures.FIXTURES),
                            help="write a reference cloud CSV instead of analysing one")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        threads = args.threads if args.threads is not None else default_threads()
        if getattr(args, "make_fixture", None):
            written = make_fixture(args.make_fixture, out)
        else:
            if args.config is None:
                raise ConfigError("a config file is required")
            config = load_config(args.command, args.config, args.seed)
            written = COMMANDS[args.command](config, out, threads)
    except GrazingIntersection as exc:
        step = f" (step {exc.step})" if exc.step is not None else ""
        print(f"numerical failure{step}: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DataError, InvalidDescriptor, OSError, KeyError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
