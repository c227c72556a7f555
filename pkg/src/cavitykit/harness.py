"""Experiment configs, dispatch to the library, and run records.

A config is a JSON object::

    {"op": "fexact", "model": "ising:beta=0.2,density=1", "seed": 7,
     "params": {"n": 10, "seeds": 50}}

``model`` may be a preset string, an inline model dict, or a path to a JSON
model file.  Every op returns a plain dict payload.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__, jsonio
from . import rng as _rng
from .bethe import ass_increments, bethe_free_energy, free_energy_exact, poissonized_bethe, telescoped_free_energy
from .bp import Population, bp_run, population_dynamics, uniform_population
from .core import DiscreteMeasure, FactorGraph, StateSpaceTooLarge, all_single_marginals, log_partition_function
from .cutmetric import EmbeddedMeasure, strong_cut_distance, weak_cut_distance
from .diagnostics import (
    cavity_consistency,
    census_distance,
    factorization_statistic,
    nonreconstruction_statistic,
    over_seeds,
)
from .models import ModelSpec, parse_preset, sample_factor_graph
from .regularity import regularity_decomposition


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str):
        super().__init__(message)
        self.field = field


@dataclass
class ExperimentConfig:
    op: str
    params: dict = field(default_factory=dict)
    model: Any = None
    seed: int | None = None
    out: str | None = None
    threads: int = 1

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a JSON object", "config")
        if "op" not in data:
            raise ConfigError("missing field 'op'", "op")
        seed = data.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise ConfigError("seed must be an integer", "seed")
        params = data.get("params", {})
        if not isinstance(params, Mapping):
            raise ConfigError("params must be an object", "params")
        return cls(str(data["op"]), dict(params), data.get("model"), seed, data.get("out"), int(data.get("threads", 1)))

    def to_dict(self) -> dict:
        return {"op": self.op, "model": self.model, "seed": self.seed, "params": self.params, "threads": self.threads}


@dataclass
class RunRecord:
    config: dict
    version: str
    wall_time: float
    results: dict

    def to_dict(self) -> dict:
        return {"config": self.config, "version": self.version, "wall_time": self.wall_time, "results": self.results}


# ---------------------------------------------------------------------------
# loading


def _load_json(value, what: str):
    if isinstance(value, (dict, list)):
        return value
    if isinstance(value, str) and os.path.exists(value):
        try:
            with open(value) as fh:
                return jsonio.loads(fh.read())
        except ValueError as exc:
            raise ConfigError(f"{what} file {value!r} is not valid JSON: {exc}", what) from None
    return None


def _missing_name(exc: Exception) -> str | None:
    m = re.search(r"missing field '([^']+)'", str(exc))
    return m.group(1) if m else None


def load_model(value) -> ModelSpec:
    if value is None:
        raise ConfigError("missing field 'model'", "model")
    data = _load_json(value, "model")
    try:
        if data is not None:
            return ModelSpec.from_dict(data)
        if isinstance(value, str):
            return parse_preset(value)
    except (ValueError, TypeError, KeyError) as exc:
        name = _missing_name(exc)
        raise ConfigError(f"invalid model: {exc}", f"model.{name}" if name else "model") from None
    raise ConfigError("model must be a preset string, an object, or a file path", "model")


def load_graph(value) -> FactorGraph:
    data = _load_json(value, "graph")
    if data is None:
        raise ConfigError("graph must be an object or a file path", "params.graph")
    try:
        return FactorGraph.from_dict(data)
    except (ValueError, TypeError, KeyError) as exc:
        name = _missing_name(exc)
        raise ConfigError(f"invalid graph: {exc}", f"params.graph.{name}" if name else "params.graph") from None


def load_measure(value, what: str) -> EmbeddedMeasure:
    data = _load_json(value, what)
    if data is None:
        raise ConfigError(f"{what} must be an object or a file path", f"params.{what}")
    try:
        return EmbeddedMeasure.from_dict(data)
    except (ValueError, TypeError, KeyError) as exc:
        name = _missing_name(exc)
        raise ConfigError(f"invalid measure: {exc}", f"params.{what}.{name}" if name else f"params.{what}") from None


def _need_seed(cfg: ExperimentConfig) -> int:
    if cfg.seed is None:
        raise ConfigError(f"op {cfg.op!r} is stochastic and needs a seed", "seed")
    return cfg.seed


def _param(cfg: ExperimentConfig, name: str, default=None, kind: Callable = None):
    if name not in cfg.params:
        if default is None:
            raise ConfigError(f"missing parameter {name!r}", f"params.{name}")
        return default
    value = cfg.params[name]
    try:
        return kind(value) if kind else value
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {name!r} has the wrong type", f"params.{name}") from None


def _graph_for(cfg: ExperimentConfig) -> FactorGraph:
    if "graph" in cfg.params:
        return load_graph(cfg.params["graph"])
    n = _param(cfg, "n", kind=int)
    return sample_factor_graph(load_model(cfg.model), n, _need_seed(cfg))


def _population_for(cfg: ExperimentConfig, spec: ModelSpec) -> Population:
    seed = _need_seed(cfg)
    if "population" in cfg.params:
        data = _load_json(cfg.params["population"], "population")
        if data is None:
            raise ConfigError("population must be an object or a file path", "params.population")
        return Population.from_dict(data)
    size = _param(cfg, "pop_size", 10_000, int)
    sweeps = _param(cfg, "sweeps", 100, int)
    jitter = _param(cfg, "jitter", 0.1, float)
    init = uniform_population(size, spec.q, jitter, _rng.child_seed(seed, "harness_init"))
    return population_dynamics(spec, init, sweeps, _rng.child_seed(seed, "harness_popdyn"))


# ---------------------------------------------------------------------------
# ops


def _op_gen(cfg):
    g = sample_factor_graph(load_model(cfg.model), _param(cfg, "n", kind=int), _need_seed(cfg))
    return {"graph": g.to_dict()}


def _op_exact(cfg):
    g = _graph_for(cfg)
    return {"n": g.n, "m": g.m, "log_z": log_partition_function(g), "marginals": all_single_marginals(g)}


def _op_bp(cfg):
    g = _graph_for(cfg)
    res = bp_run(g, _param(cfg, "damping", 0.5, float), _param(cfg, "tol", 1e-10, float), _param(cfg, "max_iters", 10_000, int))
    return {"marginals": res.marginals, "converged": res.converged, "residual": res.residual, "iterations": res.iterations}


def _op_popdyn(cfg):
    spec = load_model(cfg.model)
    pop = _population_for(cfg, spec)
    out = {
        "size": pop.size,
        "generation": pop.generation,
        "mean": pop.points.mean(axis=0),
        "sd": pop.points.std(axis=0, ddof=1) if pop.size > 1 else np.zeros(pop.q),
    }
    if cfg.params.get("save"):
        atomic_write(cfg.params["save"], jsonio.dumps(pop.to_dict(), indent=None))
        out["saved"] = cfg.params["save"]
    return out


def _op_bethe(cfg):
    spec = load_model(cfg.model)
    seed = _need_seed(cfg)
    pop = _population_for(cfg, spec)
    samples = _param(cfg, "samples", 100_000, int)
    form = _param(cfg, "form", "tree", str)
    if form == "tree":
        est = bethe_free_energy(spec, pop, samples, _rng.child_seed(seed, "harness_bethe"))
    elif form == "poissonized":
        est = poissonized_bethe(spec, pop, samples, _rng.child_seed(seed, "harness_bethe"))
    else:
        raise ConfigError("form must be 'tree' or 'poissonized'", "params.form")
    return est.to_dict()


def _op_ass(cfg):
    spec = load_model(cfg.model)
    n_max = _param(cfg, "n_max", kind=int)
    incs = ass_increments(spec, n_max, _param(cfg, "seeds_per_n", 100, int), _need_seed(cfg), bool(cfg.params.get("exact", True)))
    tele = telescoped_free_energy(incs, n_max + 1)
    return {"increments": [i.to_dict() for i in incs], "telescoped": {"n": n_max + 1, **tele.to_dict()}}


def _op_fexact(cfg):
    spec = load_model(cfg.model)
    seeds = cfg.params.get("seeds", 100)
    base = _need_seed(cfg)
    if isinstance(seeds, int):
        seeds = [_rng.child_seed(base, "fexact", i) for i in range(seeds)]
    elif not isinstance(seeds, list):
        raise ConfigError("seeds must be a count or a list", "params.seeds")
    return free_energy_exact(spec, _param(cfg, "n", kind=int), seeds).to_dict()


def _cut_certificate(cert: dict) -> dict:
    w = cert["witness"]
    out = {
        "sup_kind": cert["sup_kind"],
        "lower_bound": cert["lower_bound"],
        "witness": {"U": np.flatnonzero(w.U), "A": np.flatnonzero(w.A), "B": [list(p) for p in w.B]},
        "coupling": cert["coupling"].matrix,
    }
    if "permutation" in cert:
        out["permutation"] = cert["permutation"]
        out["note"] = cert["note"]
    return out


def _op_cutdist(cfg):
    mu = load_measure(_param(cfg, "mu"), "mu")
    nu = load_measure(_param(cfg, "nu"), "nu")
    mode = _param(cfg, "mode", "exact", str)
    metric = _param(cfg, "metric", "strong", str)
    seed = cfg.seed if cfg.seed is not None else (0 if mode == "exact" else _need_seed(cfg))
    try:
        if metric == "strong":
            value, cert = strong_cut_distance(mu, nu, mode, seed)
        elif metric == "weak":
            value, cert = weak_cut_distance(mu, nu, mode, seed)
        else:
            raise ConfigError("metric must be 'strong' or 'weak'", "params.metric")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc), "params.mode") from None
    return {"value": value, "metric": metric, "mode": mode, "certificate": _cut_certificate(cert)}


def _op_regularity(cfg):
    data = _load_json(_param(cfg, "measure"), "measure")
    if data is None:
        raise ConfigError("measure must be an object or a file path", "params.measure")
    try:
        m = DiscreteMeasure.from_dict(data)
    except (ValueError, TypeError, KeyError) as exc:
        name = _missing_name(exc)
        raise ConfigError(f"invalid measure: {exc}", f"params.measure.{name}" if name else "params.measure") from None
    eps = _param(cfg, "eps", 0.2, float)
    v, s, report, steps = regularity_decomposition(m, eps, budget=_param(cfg, "budget", 1 << 16, int), seed=cfg.seed or 0)
    return {
        "coordinate_blocks": [b.tolist() for b in v.blocks],
        "config_blocks": [b.tolist() for b in s.blocks],
        "steps": steps,
        "report": report.to_dict(),
    }


def _op_diagnose(cfg):
    spec = load_model(cfg.model)
    which = _param(cfg, "which", kind=str)
    seed = _need_seed(cfg)
    n = _param(cfg, "n", kind=int)
    count = _param(cfg, "seeds", 20, int)
    seeds = [_rng.child_seed(seed, "diagnose", i) for i in range(count)]
    ell = _param(cfg, "ell", 1, int)
    if which == "factorization":
        k = _param(cfg, "k", 2, int)
        res = over_seeds(lambda g: factorization_statistic(g, k), spec, n, seeds, k=k)
    elif which == "nonrec":
        res = over_seeds(lambda g: nonreconstruction_statistic(g, 0, ell), spec, n, seeds, ell=ell)
    elif which == "census":
        res = census_distance(spec, n, ell, seeds, _param(cfg, "tree_samples", 100_000, int), seed)
    elif which == "cavity":
        res = over_seeds(cavity_consistency, spec, n, seeds)
    else:
        raise ConfigError("which must be factorization, nonrec, census or cavity", "params.which")
    return {"which": which, **res.to_dict()}


OPS: dict[str, Callable[[ExperimentConfig], dict]] = {
    "gen": _op_gen,
    "exact": _op_exact,
    "bp": _op_bp,
    "popdyn": _op_popdyn,
    "bethe": _op_bethe,
    "ass": _op_ass,
    "fexact": _op_fexact,
    "cutdist": _op_cutdist,
    "regularity": _op_regularity,
    "diagnose": _op_diagnose,
}


def run(config: ExperimentConfig | Mapping[str, Any]) -> RunRecord:
    """Dispatch one config.  Raises :class:`ConfigError` for invalid input."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    if cfg.op not in OPS:
        raise ConfigError(f"unknown operation {cfg.op!r}", "op")
    start = time.perf_counter()
    try:
        results = OPS[cfg.op](cfg)
    except StateSpaceTooLarge as exc:
        raise ConfigError(str(exc), "params.n") from None
    record = RunRecord(cfg.to_dict(), __version__, time.perf_counter() - start, jsonio.loads(jsonio.dumps(results)))
    if cfg.out:
        atomic_write(cfg.out, jsonio.dumps(record.to_dict()))
    return record


def _run_payload(data: dict) -> dict:
    return run(data).results


def _headline(results: dict) -> tuple[float, float]:
    for key in ("value", "statistic"):
        if key in results:
            return float(results[key]), float(results.get("se", 0.0))
    if "telescoped" in results:
        return float(results["telescoped"]["value"]), float(results["telescoped"]["se"])
    if "log_z" in results:
        return float(results["log_z"]), 0.0
    raise ConfigError("mean merge needs a scalar 'value' or 'statistic' in every result", "merge")


def sweep(configs: list, merge: str = "mean", threads: int = 1) -> RunRecord:
    """Run several configs of one op and merge their payloads.

    ``mean``: ``value`` is the mean headline, ``se`` the SD over entries
    divided by ``sqrt(m)``, and ``se_within`` combines the per-entry SEs.
    ``concat``: the list of payloads.
    """
    cfgs = [c if isinstance(c, ExperimentConfig) else ExperimentConfig.from_dict(c) for c in configs]
    if not cfgs:
        raise ConfigError("sweep needs at least one config", "configs")
    if len({c.op for c in cfgs}) != 1:
        raise ConfigError("sweep entries must share one operation", "configs")
    if merge not in ("mean", "concat"):
        raise ConfigError("merge must be 'mean' or 'concat'", "merge")
    start = time.perf_counter()
    dicts = [{**c.to_dict(), "out": None} for c in cfgs]
    if threads > 1 and len(dicts) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            payloads = list(pool.map(_run_payload, dicts))
    else:
        payloads = [_run_payload(d) for d in dicts]
    if merge == "concat":
        results = {"merge": "concat", "entries": payloads}
    else:
        heads = [_headline(p) for p in payloads]
        vals = np.array([h[0] for h in heads])
        m = len(vals)
        se = float(vals.std(ddof=1) / math.sqrt(m)) if m > 1 else 0.0
        se_within = math.sqrt(sum(h[1] ** 2 for h in heads)) / m
        results = {"merge": "mean", "value": float(vals.mean()), "se": se, "se_within": se_within, "entries": m}
    cfg = {"op": "sweep", "merge": merge, "configs": [c.to_dict() for c in cfgs]}
    return RunRecord(cfg, __version__, time.perf_counter() - start, jsonio.loads(jsonio.dumps(results)))


# ---------------------------------------------------------------------------
# output


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")
    os.replace(tmp, path)


def flatten(obj, prefix: str = "") -> list[tuple[str, Any]]:
    """Dotted-key rows for CSV output."""
    if isinstance(obj, dict):
        rows = []
        for k, v in obj.items():
            rows.extend(flatten(v, f"{prefix}.{k}" if prefix else str(k)))
        return rows
    if isinstance(obj, list):
        rows = []
        for i, v in enumerate(obj):
            rows.extend(flatten(v, f"{prefix}[{i}]"))
        return rows
    return [(prefix, obj)]


def to_csv(results: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["key", "value"])
    for k, v in flatten(results):
        writer.writerow([k, format(v, ".17g") if isinstance(v, float) else v])
    return buf.getvalue()
