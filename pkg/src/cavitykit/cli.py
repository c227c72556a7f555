"""Command-line entry point: ``cavitykit <op> [flags]``."""

from __future__ import annotations

import argparse
import sys

from . import jsonio
from .harness import ConfigError, ExperimentConfig, atomic_write, run, sweep, to_csv

OPS = ("gen", "exact", "bp", "popdyn", "bethe", "ass", "fexact", "cutdist", "regularity", "diagnose")

# flag -> (params key, type)
OP_FLAGS = {
    "gen": [("--n", int)],
    "exact": [("--n", int), ("--graph", str)],
    "bp": [("--n", int), ("--graph", str), ("--damping", float), ("--tol", float), ("--max-iters", int)],
    "popdyn": [("--pop-size", int), ("--sweeps", int), ("--jitter", float), ("--save", str)],
    "bethe": [("--pop-size", int), ("--sweeps", int), ("--samples", int), ("--form", str), ("--population", str)],
    "ass": [("--n-max", int), ("--seeds-per-n", int)],
    "fexact": [("--n", int), ("--seeds", int)],
    "cutdist": [("--mu", str), ("--nu", str), ("--mode", str), ("--metric", str)],
    "regularity": [("--measure", str), ("--eps", float), ("--budget", int)],
    "diagnose": [("--which", str), ("--n", int), ("--ell", int), ("--k", int), ("--seeds", int), ("--tree-samples", int)],
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="required for stochastic ops")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="write the JSON record here (atomically)")
    p.add_argument("--csv", action="store_true", help="print results as key,value CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cavitykit", description="Random factor graph experiments.")
    sub = parser.add_subparsers(dest="op", required=True)
    for op in OPS:
        p = sub.add_parser(op)
        _common(p)
        p.add_argument("--config", default=None, help="JSON config file; flags override it")
        src = p.add_mutually_exclusive_group()
        src.add_argument("--model", default=None, help="model JSON file")
        src.add_argument("--preset", default=None, help="e.g. ising:beta=0.3,density=1")
        for flag, kind in OP_FLAGS[op]:
            p.add_argument(flag, type=kind, default=None)
        if op == "ass":
            p.add_argument("--asymptotic", action="store_true", help="use the asymptotic rates")
    p = sub.add_parser("sweep")
    _common(p)
    p.add_argument("configs", nargs="+", help="config files; a file may hold a list")
    p.add_argument("--merge", choices=("mean", "concat"), default="mean")
    return parser


def _config_from_args(args) -> dict:
    data: dict = {}
    if args.config:
        with open(args.config) as fh:
            data = jsonio.loads(fh.read())
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object", "config")
    data["op"] = args.op
    params = dict(data.get("params", {}))
    for flag, _ in OP_FLAGS[args.op]:
        key = flag[2:].replace("-", "_")
        value = getattr(args, key)
        if value is not None:
            params[key] = value
    if getattr(args, "asymptotic", False):
        params["exact"] = False
    data["params"] = params
    if args.model or args.preset:
        data["model"] = args.model or args.preset
    for key in ("seed", "out"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    data["threads"] = args.threads
    return data


def _load_sweep(paths) -> list:
    configs = []
    for path in paths:
        with open(path) as fh:
            data = jsonio.loads(fh.read())
        configs.extend(data if isinstance(data, list) else [data])
    return configs


def _emit(results: dict, as_csv: bool) -> None:
    sys.stdout.write(to_csv(results) if as_csv else jsonio.dumps(results) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.op == "sweep":
            record = sweep(_load_sweep(args.configs), args.merge, args.threads)
            if args.out:
                atomic_write(args.out, jsonio.dumps(record.to_dict()))
        else:
            record = run(ExperimentConfig.from_dict(_config_from_args(args)))
    except ConfigError as exc:
        sys.stderr.write(jsonio.dumps({"error": "invalid configuration", "field": exc.field, "detail": str(exc)}) + "\n")
        return 2
    except (OSError, ValueError) as exc:
        sys.stderr.write(jsonio.dumps({"error": type(exc).__name__, "field": None, "detail": str(exc)}) + "\n")
        return 2
    _emit(record.to_dict() if not args.csv else record.results, args.csv)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
