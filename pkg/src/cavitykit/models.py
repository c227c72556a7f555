"""The Poisson random factor-graph model and named presets."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from . import rng as _rng
from .core import ISING, FactorGraph, SpinAlphabet, WeightFunction, _field, weight_from_dict


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Weight functions with per-variable constraint densities ``rho``."""

    alphabet: SpinAlphabet
    weights: tuple
    rhos: tuple

    def __post_init__(self):
        weights = tuple(self.weights)
        rhos = tuple(float(r) for r in self.rhos)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "rhos", rhos)
        if not weights:
            raise ValueError("a model needs at least one weight function")
        if len(weights) != len(rhos):
            raise ValueError("one density per weight function")
        if any(r < 0 or not math.isfinite(r) for r in rhos):
            raise ValueError("densities must be finite and non-negative")
        for wf in weights:
            if wf.q != self.alphabet.size:
                raise ValueError(f"weight function {wf.name!r} does not match the alphabet size")

    @property
    def q(self) -> int:
        return self.alphabet.size

    @property
    def families(self):
        return list(zip(self.weights, self.rhos))

    def offspring_rates(self) -> np.ndarray:
        """Mean number of constraints of each type incident to one variable (``k * rho``)."""
        return np.array([wf.arity * r for wf, r in zip(self.weights, self.rhos)])

    def scaled(self, factor: float) -> "ModelSpec":
        return ModelSpec(self.alphabet, self.weights, tuple(r * factor for r in self.rhos))

    def to_dict(self) -> dict:
        return {
            "alphabet": list(self.alphabet.symbols),
            "families": [
                {"wf": {"name": wf.name, "arity": wf.arity, "table": [float(t) for t in wf.table]}, "rho": r}
                for wf, r in zip(self.weights, self.rhos)
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelSpec":
        alphabet = SpinAlphabet(tuple(_field(data, "alphabet")))
        fams = _field(data, "families")
        weights = tuple(weight_from_dict(_field(f, "wf")) for f in fams)
        rhos = tuple(float(_field(f, "rho")) for f in fams)
        return cls(alphabet, weights, rhos)


def sample_factor_graph(spec: ModelSpec, n: int, seed: int) -> FactorGraph:
    """Draw ``G_n``: ``Po(n*rho)`` constraints per type, neighbour tuples uniform on ``[n]**k``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    gen = _rng.stream(seed, "factor_graph", n)
    constraints = []
    for w, (wf, rho) in enumerate(spec.families):
        m = int(gen.poisson(n * rho))
        tuples = gen.integers(0, n, size=(m, wf.arity))
        constraints.extend((w, tuple(row)) for row in tuples.tolist())
    return FactorGraph(spec.alphabet, n, spec.weights, tuple(constraints))


def ising_weight(beta: float) -> WeightFunction:
    s = np.array(ISING.symbols, dtype=float)
    return WeightFunction(f"ising(beta={beta})", 2, np.exp(beta * np.outer(s, s)).ravel())


def field_weight(h: float) -> WeightFunction:
    """Arity-one external field ``exp(h * x)`` on the Ising alphabet."""
    s = np.array(ISING.symbols, dtype=float)
    return WeightFunction(f"field(h={h})", 1, np.exp(h * s))


def ksat_weight(signs: tuple, beta: float) -> WeightFunction:
    k = len(signs)
    table = np.empty(2**k)
    for i, x in enumerate(itertools.product(ISING.symbols, repeat=k)):
        violated = sum(c * xi for c, xi in zip(signs, x)) == -k
        table[i] = math.exp(-beta * violated)
    label = "".join("+" if c > 0 else "-" for c in signs)
    return WeightFunction(f"ksat[{label}](beta={beta})", k, table)


def preset_ksat(k: int, beta: float, density: float) -> ModelSpec:
    """``2**k`` clause types, each with density ``density / 2**k``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    signs = list(itertools.product((1, -1), repeat=k))
    weights = tuple(ksat_weight(c, beta) for c in signs)
    return ModelSpec(ISING, weights, tuple(density / 2**k for _ in signs))


def preset_ising_pairwise(beta: float, density: float = 1.0) -> ModelSpec:
    return ModelSpec(ISING, (ising_weight(beta),), (density,))


def preset_ising_grid(side: int, beta: float) -> FactorGraph:
    """Ising model on the ``side x side`` box of Z^2, one constraint per lattice edge."""
    if side < 1:
        raise ValueError("side must be at least 1")
    vid = lambda r, c: r * side + c  # noqa: E731
    edges = []
    for r in range(side):
        for c in range(side):
            if c + 1 < side:
                edges.append((0, (vid(r, c), vid(r, c + 1))))
            if r + 1 < side:
                edges.append((0, (vid(r, c), vid(r + 1, c))))
    return FactorGraph(ISING, side * side, (ising_weight(beta),), tuple(edges))


def combine_specs(*specs: ModelSpec) -> ModelSpec:
    """Union of the families of several specs over the same alphabet."""
    alphabet = specs[0].alphabet
    if any(s.alphabet != alphabet for s in specs):
        raise ValueError("specs must share an alphabet")
    return ModelSpec(alphabet, sum((s.weights for s in specs), ()), sum((s.rhos for s in specs), ()))


def parse_preset(text: str) -> ModelSpec:
    """Parse ``name:key=value,...``, e.g. ``ksat:k=3,beta=1.0,density=2.5``."""
    name, _, rest = text.partition(":")
    params: dict[str, float] = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"malformed preset parameter {item!r}")
        params[key.strip()] = float(value)
    try:
        if name == "ksat":
            return preset_ksat(int(params["k"]), params["beta"], params["density"])
        if name == "ising":
            spec = preset_ising_pairwise(params["beta"], params.get("density", params.get("rho", 1.0)))
            if params.get("h", 0.0):
                spec = combine_specs(spec, ModelSpec(ISING, (field_weight(params["h"]),), (params.get("field_rho", 1.0),)))
            return spec
    except KeyError as exc:
        raise ValueError(f"preset {name!r} is missing parameter {exc.args[0]!r}") from None
    raise ValueError(f"unknown preset {name!r}")
