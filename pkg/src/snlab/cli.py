"""Command-line batch runner.

Configuration is an INI-style file with a ``[metric]`` and an optional
``[run]`` section.  Values are Python literals::

    [metric]
    variant = rotational
    constant = 2.0
    fourier = [(0, 1, 1.0, 0.0)]

    [run]
    Q = 5
    directions = [(1, 0), (0, 1)]

Exit codes: 0 success, 1 configuration error, 2 every computation failed,
3 some computation failed and ``--strict`` was given.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import classify_direction, fit_models, geometric_grid, profile_defect
from .loop_minimizer import MinimizeOptions
from .metrics import MetricError, spec_from_dict, spec_hash, validate_spec
from .rational_approx import LatticeVector
from .rotational_oracle import oracle_sigma, oracle_unit_circle
from .stable_norm import (SCHEMA, StableNorm, StableNormTable, TableOptions, build_table,
                          compute_entry, render_svg, write_polyline_csv)

log = logging.getLogger("snlab")

EXIT_OK, EXIT_CONFIG, EXIT_FAILED, EXIT_PARTIAL = 0, 1, 2, 3

METRIC_KEYS = {"variant", "matrix", "drift", "constant", "fourier"}
RUN_DEFAULTS = {
    "Q": 5,
    "seed": 0,
    "restarts": 8,
    "floquet": True,
    "table": None,
    "directions": [(1, 0), (0, 1)],
    "classes": [(1, 0), (0, 1), (1, 1)],
    "xi": (1, 0),
    "vhat": (0, 1),
    "t0": 0.2,
    "t_count": 6,
    "ratio": 0.5,
    "mode": None,
    "max_norm": 128,
    "n_list": (4, 8, 16, 32),
    "oracle_points": 64,
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    spec: object
    metric: dict
    run: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.run[key]

    @property
    def seed(self):
        return int(self.run["seed"])

    def table_options(self, floquet=None):
        fl = self.run["floquet"] if floquet is None else floquet
        return TableOptions(restarts=int(self.run["restarts"]), minimize=MinimizeOptions(),
                            floquet=bool(fl), seed=self.seed)


def _literal(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip()


def _pair(v, name):
    try:
        a, b = v
        return (float(a), float(b))
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a pair of numbers, got {v!r}") from None


def _lattice(v, name):
    a, b = _pair(v, name)
    if a != int(a) or b != int(b) or (a, b) == (0, 0):
        raise ConfigError(f"{name} must be a nonzero integer pair, got {v!r}")
    return (int(a), int(b))


def parse_config(text, overrides=None):
    """``RunConfig`` from configuration text; raises ``ConfigError``."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable configuration: {exc}") from None
    if not cp.has_section("metric"):
        raise ConfigError("configuration needs a [metric] section")
    extra = set(cp.sections()) - {"metric", "run"}
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    metric = {k: _literal(v) for k, v in cp.items("metric")}
    unknown = set(metric) - METRIC_KEYS
    if unknown:
        raise ConfigError(f"unknown metric key(s): {', '.join(sorted(unknown))}")
    if metric.get("variant") == "euclidean":
        metric = {"variant": "flat", "matrix": [[1.0, 0.0], [0.0, 1.0]], "drift": [0.0, 0.0]}
    try:
        spec = spec_from_dict(metric)
        validate_spec(spec, strict=True)
    except (MetricError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid metric: {exc}") from None
    run = dict(RUN_DEFAULTS)
    if cp.has_section("run"):
        for k, v in cp.items("run"):
            if k not in RUN_DEFAULTS:
                raise ConfigError(f"unknown run key {k!r}")
            run[k] = _literal(v)
    for k, v in (overrides or {}).items():
        if v is not None:
            run[k] = v
    _check_run(run)
    return RunConfig(spec, spec.describe(), run)


def _check_run(run):
    if not isinstance(run["Q"], (int, float)) or run["Q"] < 3:
        raise ConfigError("Q must be a number >= 3")
    for key in ("seed", "restarts", "t_count", "max_norm", "oracle_points"):
        if not isinstance(run[key], int) or isinstance(run[key], bool):
            raise ConfigError(f"{key} must be an integer")
    if run["restarts"] < 1 or run["t_count"] < 1 or run["max_norm"] < 2 or run["oracle_points"] < 4:
        raise ConfigError("restarts, t_count >= 1, max_norm >= 2 and oracle_points >= 4 required")
    if not (0 < float(run["ratio"]) < 1) or float(run["t0"]) <= 0:
        raise ConfigError("t0 must be positive and ratio in (0, 1)")
    if run["mode"] not in (None, "sigma", "beta"):
        raise ConfigError("mode must be 'sigma' or 'beta'")
    run["directions"] = [_pair(d, "direction") for d in run["directions"]]
    run["classes"] = [_lattice(z, "class") for z in run["classes"]]
    run["xi"] = _pair(run["xi"], "xi")
    run["vhat"] = _pair(run["vhat"], "vhat")
    if run["xi"] == (0.0, 0.0) or run["vhat"] == (0.0, 0.0):
        raise ConfigError("xi and vhat must be nonzero")
    run["n_list"] = tuple(int(n) for n in run["n_list"])
    if not run["n_list"] or min(run["n_list"]) < 1:
        raise ConfigError("n_list must hold positive integers")


def load_config(path, overrides=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, overrides)


# Outputs ----------------------------------------------------------------------


def _header(cfg, command):
    return {"schema": SCHEMA, "command": command, "metric": cfg.metric, "metric_hash": spec_hash(cfg.spec),
            "seed": cfg.seed}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(path, doc):
    with open(path, "w") as fh:
        fh.write(json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(_cell(c) for c in r) + "\n")


def _cell(c):
    if isinstance(c, (bool, np.bool_)):
        return str(int(c))
    if isinstance(c, (int, np.integer)):
        return str(int(c))
    if isinstance(c, (float, np.floating)):
        return f"{c:.12g}"
    return str(c)


def _status(n_ok, n_total, strict):
    if n_total and n_ok == 0:
        return EXIT_FAILED
    if strict and n_ok < n_total:
        return EXIT_PARTIAL
    return EXIT_OK


# Commands ---------------------------------------------------------------------


def _table(cfg, threads):
    path = cfg["table"]
    if path:
        try:
            return StableNormTable.from_json(path, cfg.spec)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot use table {path}: {exc}") from None
    return build_table(cfg.spec, cfg["Q"], cfg.table_options(), workers=threads)


def cmd_table(cfg, out, threads=1, strict=False):
    table = build_table(cfg.spec, cfg["Q"], cfg.table_options(), workers=threads)
    doc = table.to_dict()
    doc.update({"command": "table", "seed": cfg.seed})
    write_json(os.path.join(out, "table.json"), doc)
    lines = [f"{'z':>12} {'sigma':>20} {'error':>10} {'n':>3} {'floquet':>12}"]
    for key in sorted(table.entries, key=lambda k: math.atan2(k[1], k[0])):
        e = table.entries[key]
        fl = e.floquet.get("classification", "") if e.floquet else ""
        state = f"{e.sigma:20.14g}" if e.ok else f"{'FAILED':>20}"
        lines.append(f"{str(key):>12} {state} {e.error:10.2g} {e.count:3d} {fl:>12}")
    for e in table.failures:
        lines.append(f"warning: class {e.z} failed: {e.failure}")
    with open(os.path.join(out, "table_summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    n = len(table.entries)
    print(f"table: {n - len(table.failures)}/{n} classes", file=sys.stderr)
    return _status(n - len(table.failures), n, strict)


def _oracle_factor(spec):
    return getattr(spec, "series", None) if spec.variant == "rotational" else None


def cmd_circle(cfg, out, threads=1, strict=False):
    table = _table(cfg, threads)
    pts = table.unit_points()
    write_polyline_csv(os.path.join(out, "circle.csv"), pts)
    layers = [("variational", pts, "line", "#1f5fa8"), ("classes", pts, "dots", "#1f5fa8")]
    doc = _header(cfg, "circle")
    doc["points"] = [{"z": list(z), "sigma": s, "error": e} for z, s, e in table.points()]
    f = _oracle_factor(cfg.spec)
    if f is not None:
        curve = oracle_unit_circle(f, cfg["oracle_points"])
        write_polyline_csv(os.path.join(out, "oracle_circle.csv"), curve.points)
        layers.insert(0, ("oracle", curve.points, "line", "#d95f02"))
        gaps = [abs(s / oracle_sigma(f, z) - 1.0) for z, s, _ in table.points()]
        doc["oracle_max_relative_gap"] = max(gaps)
        print(f"circle: oracle max relative gap {max(gaps):.3g}", file=sys.stderr)
    with open(os.path.join(out, "circle.svg"), "w") as fh:
        fh.write(render_svg(layers, title="unit ball of the stable norm"))
    write_json(os.path.join(out, "circle.json"), doc)
    n = len(table.entries)
    return _status(n - len(table.failures), n, strict)


def _profile_rows(p):
    return [(t, d, e, c) for t, d, e, c in zip(p.t, p.values, p.errors, p.censored)]


def cmd_classify(cfg, out, threads=1, strict=False):
    source = StableNorm(cfg.spec, cfg.table_options(floquet=False))
    grid = geometric_grid(cfg["t0"], cfg["t_count"], cfg["ratio"])
    results, ok = [], 0
    print(f"{'xi':>26} {'verdict':>16} {'fit +':>18} {'fit -':>18}")
    for xi in cfg["directions"]:
        try:
            v = classify_direction(source, xi, grid, max_norm=cfg["max_norm"], n_list=cfg["n_list"])
        except (ValueError, ArithmeticError) as exc:
            results.append({"xi": list(xi), "verdict": "failed", "error": str(exc)})
            print(f"{str(xi):>26} {'failed':>16}  {exc}")
            continue
        ok += 1
        results.append(v.as_record())
        print(f"{str(xi):>26} {v.verdict:>16} {v.fits[0].model:>18} {v.fits[1].model:>18}")
    doc = _header(cfg, "classify")
    doc["directions"] = results
    write_json(os.path.join(out, "classify.json"), doc)
    return _status(ok, len(cfg["directions"]), strict)


def cmd_floquet(cfg, out, threads=1, strict=False):
    opts = cfg.table_options(floquet=True)
    rows, recs, ok = [], [], 0
    for z in cfg["classes"]:
        if not LatticeVector.of(z).primitive:
            raise ConfigError(f"class {z} is not primitive")
        e = compute_entry(cfg.spec, z, opts)
        fl = e.floquet or {}
        good = e.ok and fl.get("classification") not in (None, "failed", "degenerate")
        ok += good
        recs.append({"z": list(z), "sigma": e.sigma, "count": e.count, "failure": e.failure, "floquet": fl})
        mu = fl.get("mu", [math.nan, math.nan])
        rows.append((z[0], z[1], e.sigma, fl.get("period", math.nan), mu[0], mu[1],
                     fl.get("lyapunov", math.nan), fl.get("classification", "failed")))
    doc = _header(cfg, "floquet")
    doc["classes"] = recs
    write_json(os.path.join(out, "floquet.json"), doc)
    write_csv(os.path.join(out, "floquet.csv"),
              ["z1", "z2", "sigma", "period", "mu_re", "mu_im", "lyapunov", "classification"], rows)
    return _status(ok, len(cfg["classes"]), strict)


def cmd_defect(cfg, out, threads=1, strict=False):
    source = StableNorm(cfg.spec, cfg.table_options(floquet=False))
    grid = geometric_grid(cfg["t0"], cfg["t_count"], cfg["ratio"])
    p = profile_defect(source, cfg["xi"], cfg["vhat"], grid, mode=cfg["mode"], max_norm=cfg["max_norm"],
                       n_list=cfg["n_list"])
    fit = fit_models(p)
    doc = _header(cfg, "defect")
    doc.update({"profile": p.as_record(), "fit": fit.as_record(), "uninformative": p.uninformative})
    write_json(os.path.join(out, "defect.json"), doc)
    write_csv(os.path.join(out, "defect.csv"), ["t", "defect", "error", "censored"], _profile_rows(p))
    print(f"defect: {fit.model} ({fit.n_uncensored} uncensored of {len(p.t)})", file=sys.stderr)
    return EXIT_FAILED if p.uninformative else EXIT_OK


def cmd_oracle(cfg, out, threads=1, strict=False):
    f = _oracle_factor(cfg.spec)
    if f is None:
        raise ConfigError("the oracle needs a rotational metric")
    curve = oracle_unit_circle(f, cfg["oracle_points"])
    vals = [(z, oracle_sigma(f, z)) for z in cfg["classes"]]
    doc = _header(cfg, "oracle")
    doc.update({"sigma": [{"z": list(z), "sigma": s} for z, s in vals],
                "circle": {"t": curve.t, "points": curve.points, "errors": curve.errors,
                           "convex": curve.is_convex()}})
    write_json(os.path.join(out, "oracle.json"), doc)
    write_csv(os.path.join(out, "oracle_sigma.csv"), ["z1", "z2", "sigma"], [(z[0], z[1], s) for z, s in vals])
    write_polyline_csv(os.path.join(out, "oracle_circle.csv"), curve.points)
    with open(os.path.join(out, "oracle_circle.svg"), "w") as fh:
        fh.write(render_svg([("oracle", curve.points, "line", "#d95f02")], title="oracle unit ball"))
    return EXIT_OK


COMMANDS = {"table": cmd_table, "circle": cmd_circle, "classify": cmd_classify,
            "floquet": cmd_floquet, "defect": cmd_defect, "oracle": cmd_oracle}


def build_parser():
    ap = argparse.ArgumentParser(prog="snlab", description="Stable norms of Finsler metrics on the 2-torus.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="metric/run configuration file")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--Q", type=float, default=None, help="table radius (overrides [run] Q)")
    ap.add_argument("--seed", type=int, default=None, help="restart seed (overrides [run] seed)")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for table builds")
    ap.add_argument("--strict", action="store_true", help="exit 3 when any computation fails")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        Q = int(args.Q) if args.Q is not None and args.Q == int(args.Q) else args.Q
        cfg = load_config(args.config, {"Q": Q, "seed": args.seed})
        os.makedirs(args.out, exist_ok=True)
        return COMMANDS[args.command](cfg, args.out, args.threads, args.strict)
    except ConfigError as exc:
        print(f"snlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
