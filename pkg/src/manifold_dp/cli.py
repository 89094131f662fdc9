"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .errors import ManifoldError
from .frechet import Dataset, MeanSolverOptions, frechet_mean
from .geometry import BallSpec, point_from_json, point_to_json
from .mechanism import privatize_frechet_mean

SEED_ENV = "MANIFOLD_DP_SEED"

SUBCOMMANDS = {
    "mean": "mean",
    "privatize": "privatize",
    "sensitivity-sim": "sensitivity",
    "utility-sim": "utility",
    "tangent-bound": "tangent-bound",
    "projection-check": "projection",
    "circle-demo": "circle-demo",
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="manifold-dp",
                     description="Differentially private Fréchet means on manifolds.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with experiment settings")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output file (CSV for simulations, JSON otherwise)")
        p.add_argument("--epsilon", type=float)
        p.add_argument("--replicates", type=int)
        p.add_argument("--manifold", choices=["sphere", "spdm"])
        p.add_argument("--ci", action="store_true",
                       help="desk-scale run with 200 replicates unless --replicates is given")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("mean", "privatize"):
            p.add_argument("--data", help="dataset JSON (points plus ball certificate)")
    return parser


def load_config(args, experiment: str) -> ex.ExperimentConfig:
    raw = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"invalid JSON in {path}: {err}") from err
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if raw.get("experiment", experiment) != experiment:
        raise ConfigError(f"config is for {raw['experiment']!r}, not {experiment!r}")
    raw["experiment"] = experiment
    if SEED_ENV in os.environ:
        try:
            raw["seed"] = int(os.environ[SEED_ENV])
        except ValueError as err:
            raise ConfigError(f"{SEED_ENV} must be an integer") from err
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.epsilon is not None:
        raw["epsilon"] = args.epsilon
    if args.ci and args.replicates is None:
        raw["replicates"] = 200
    if args.replicates is not None:
        raw["replicates"] = args.replicates
    if args.manifold is not None:
        raw["manifold"] = args.manifold
    if args.out is not None:
        raw["out_path"] = args.out
    if getattr(args, "data", None) is not None:
        raw["data_path"] = args.data
    try:
        return ex.ExperimentConfig.from_dict(raw)
    except (ManifoldError, TypeError) as err:
        raise ConfigError(str(err)) from err


def load_dataset(path) -> Dataset:
    """Read ``{"points": [point, ...], "ball": {"center": point, "radius": r}}``."""
    if path is None:
        raise ConfigError("--data is required")
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"data file not found: {path}")
    try:
        obj = json.loads(path.read_text())
        points = [point_from_json(p) for p in obj["points"]]
        ball_obj = obj["ball"]
        center = point_from_json(ball_obj["center"], points[0].manifold if points else None)
        ball = BallSpec(center, float(ball_obj["radius"]))
        return Dataset(tuple(points), ball)
    except (KeyError, TypeError, json.JSONDecodeError, ManifoldError) as err:
        raise ConfigError(f"invalid dataset {path}: {err}") from err


def _emit_json(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _write_manifest(cfg, out, elapsed, extra=None):
    manifest = {"config": cfg.to_dict(), "version": __version__,
                "wall_time_s": elapsed,
                "seed_rule": "stream = mix64(seed ^ mix64(n << 32 | replicate)), "
                             "mix64 = SplitMix64 finaliser, generator = numpy PCG64",
                "euclidean_baseline": "sensitivity 2 r_E / n with r_E the matched ambient radius"}
    if extra:
        manifest.update(extra)
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _run(cfg: ex.ExperimentConfig):
    start = time.perf_counter()
    if cfg.experiment == "mean":
        data = load_dataset(cfg.data_path)
        res = frechet_mean(data, MeanSolverOptions())
        _emit_json({"mean": point_to_json(res.mean), "iterations": res.iterations,
                    "converged": res.converged, "gradient_norm": res.gradient_norm},
                   cfg.out_path)
    elif cfg.experiment == "privatize":
        data = load_dataset(cfg.data_path)
        rng = ex.replicate_rng(cfg.seed, data.n, 0)
        point, audit = privatize_frechet_mean(data, cfg.mechanism(), rng)
        _emit_json({"point": point_to_json(point), "audit": audit}, cfg.out_path)
    else:
        rows = ex.run(cfg)
        out = cfg.out_path or f"{cfg.experiment}.csv"
        ex.write_csv(rows, ex.CSV_COLUMNS[cfg.experiment], out)
        extra = {"rows": len(rows), "output": str(out)}
        if cfg.experiment == "utility":
            summary_path = str(out) + ".summary.csv"
            ex.write_csv(ex.summarize_utility(rows), ex.UTILITY_SUMMARY_COLUMNS, summary_path)
            extra["summary"] = summary_path
        _write_manifest(cfg, out, time.perf_counter() - start, extra)
        print(out)
        return
    if cfg.out_path:
        _write_manifest(cfg, cfg.out_path, time.perf_counter() - start)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args, SUBCOMMANDS[args.command])
        _run(cfg)
    except ConfigError as err:
        print(f"manifold-dp: config error: {err}", file=sys.stderr)
        return 1
    except (ManifoldError, RuntimeError, OSError, ValueError) as err:
        print(f"manifold-dp: {type(err).__name__}: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
