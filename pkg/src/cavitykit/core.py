"""Finite factor graphs, their Gibbs measures and brute-force references.

Spins are handled internally as indices ``0..q-1`` into a
:class:`SpinAlphabet`; an assignment is an integer array of length ``n``.
Weight tables are flat arrays indexed lexicographically by the spin tuple
with the first coordinate most significant, so ``table.reshape((q,)*k)``
gives the natural tensor.

Exact routines enumerate ``q**n`` states in chunks and accumulate in log
space.  The state index of an assignment is its base-``q`` number with
variable 0 most significant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from . import rng as _rng

DEFAULT_STATE_CAP = 1 << 24
_CHUNK = 1 << 16


class StateSpaceTooLarge(ValueError):
    """Raised when an exact computation would enumerate more states than allowed."""


@dataclass(frozen=True)
class SpinAlphabet:
    symbols: tuple

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if not symbols:
            raise ValueError("alphabet must be non-empty")
        if len(set(symbols)) != len(symbols):
            raise ValueError("alphabet symbols must be distinct")

    @property
    def size(self) -> int:
        return len(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, symbol) -> int:
        return self.symbols.index(symbol)


ISING = SpinAlphabet((-1, 1))
BINARY = SpinAlphabet((0, 1))


@dataclass(frozen=True, eq=False)
class WeightFunction:
    """A strictly positive function on ``Omega**arity`` stored as a flat table."""

    name: str
    arity: int
    table: np.ndarray

    def __post_init__(self):
        if int(self.arity) < 1:
            raise ValueError("arity must be a positive integer")
        table = np.array(self.table, dtype=float).ravel()
        if table.size == 0 or not np.all(np.isfinite(table)) or np.any(table <= 0):
            raise ValueError(f"weight function {self.name!r}: entries must be finite and > 0")
        q = round(table.size ** (1.0 / self.arity))
        if q ** self.arity != table.size:
            raise ValueError(f"weight function {self.name!r}: table length {table.size} is not q**{self.arity}")
        table.setflags(write=False)
        object.__setattr__(self, "arity", int(self.arity))
        object.__setattr__(self, "table", table)

    @property
    def q(self) -> int:
        return round(self.table.size ** (1.0 / self.arity))

    def tensor(self) -> np.ndarray:
        return self.table.reshape((self.q,) * self.arity)

    def __call__(self, spins: Sequence[int]) -> float:
        return float(self.tensor()[tuple(int(s) for s in spins)])

    def is_constant(self) -> bool:
        return bool(np.all(self.table == self.table[0]))


@dataclass(frozen=True, eq=False)
class FactorGraph:
    """Variables ``0..n-1`` and constraints ``(weight id, ordered neighbour tuple)``.

    Neighbour tuples may repeat a variable.
    """

    alphabet: SpinAlphabet
    n: int
    weights: tuple
    constraints: tuple = ()

    def __post_init__(self):
        weights = tuple(self.weights)
        constraints = tuple((int(w), tuple(int(v) for v in nb)) for w, nb in self.constraints)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "constraints", constraints)
        if self.n < 0:
            raise ValueError("n must be non-negative")
        q = self.alphabet.size
        for wf in weights:
            if wf.q != q:
                raise ValueError(f"weight function {wf.name!r} is over {wf.q} spins, alphabet has {q}")
        for w, nb in constraints:
            if not 0 <= w < len(weights):
                raise ValueError(f"unknown weight function id {w}")
            if len(nb) != weights[w].arity:
                raise ValueError(f"constraint on {nb} does not match arity {weights[w].arity}")
            for v in nb:
                if not 0 <= v < self.n:
                    raise ValueError(f"neighbour id {v} out of range for n={self.n}")

    @property
    def q(self) -> int:
        return self.alphabet.size

    @property
    def m(self) -> int:
        return len(self.constraints)

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """For each variable the list of (constraint index, position) pairs touching it."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for a, (_, nb) in enumerate(self.constraints):
            for p, v in enumerate(nb):
                adj[v].append((a, p))
        return adj

    def to_dict(self) -> dict:
        return {
            "alphabet": list(self.alphabet.symbols),
            "n": self.n,
            "weight_functions": [
                {"name": wf.name, "arity": wf.arity, "table": [float(t) for t in wf.table]} for wf in self.weights
            ],
            "constraints": [{"wf": w, "neighbors": list(nb)} for w, nb in self.constraints],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FactorGraph":
        alphabet = SpinAlphabet(tuple(_field(data, "alphabet")))
        weights = tuple(weight_from_dict(w) for w in _field(data, "weight_functions"))
        constraints = tuple((int(_field(c, "wf")), tuple(_field(c, "neighbors"))) for c in _field(data, "constraints"))
        return cls(alphabet, int(_field(data, "n")), weights, constraints)


def _field(data: Mapping[str, Any], name: str):
    try:
        return data[name]
    except (KeyError, TypeError):
        raise ValueError(f"missing field {name!r}") from None


def weight_from_dict(data: Mapping[str, Any]) -> WeightFunction:
    return WeightFunction(str(_field(data, "name")), int(_field(data, "arity")), np.array(_field(data, "table"), float))


class PartitionFunction(NamedTuple):
    log_z: float
    z: float | None


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """A finitely supported probability measure on ``Omega**n``.

    ``configs`` is an ``(S, n)`` integer array of spin indices with distinct
    rows, ``probs`` the matching positive masses.
    """

    alphabet: SpinAlphabet
    configs: np.ndarray
    probs: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        configs = np.array(self.configs, dtype=np.int64)
        if configs.ndim == 1:
            configs = configs[None, :]
        probs = np.array(self.probs, dtype=float).ravel()
        if configs.shape[0] != probs.size or probs.size == 0:
            raise ValueError("configs and probs must have matching non-zero length")
        if np.any(probs <= 0):
            raise ValueError("support probabilities must be positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        if configs.size and (configs.min() < 0 or configs.max() >= self.alphabet.size):
            raise ValueError("config entries must be alphabet indices")
        if len({row.tobytes() for row in configs}) != configs.shape[0]:
            raise ValueError("support configurations must be distinct")
        configs.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "configs", configs)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "n", configs.shape[1])

    @property
    def support_size(self) -> int:
        return self.probs.size

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "alphabet": list(self.alphabet.symbols),
            "atoms": [{"weight": float(p), "values": row.tolist()} for row, p in zip(self.configs, self.probs)],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DiscreteMeasure":
        alphabet = SpinAlphabet(tuple(_field(data, "alphabet")))
        atoms = _field(data, "atoms")
        configs = np.array([_field(a, "values") for a in atoms], dtype=np.int64)
        probs = np.array([_field(a, "weight") for a in atoms], dtype=float)
        return cls(alphabet, configs, probs)


# ---------------------------------------------------------------------------
# enumeration engine


def _check_cap(q: int, free: int, cap: int) -> int:
    if free * math.log(q) > math.log(cap) + 1e-9:
        raise StateSpaceTooLarge(f"{q}**{free} states exceed the enumeration cap {cap}")
    return q**free


def _enumerate(
    g: FactorGraph, fixed: Mapping[int, int] | None = None, cap: int = DEFAULT_STATE_CAP
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(spins, log_weight)`` chunks over all assignments of the free variables.

    ``spins`` has shape ``(c, n)``; fixed variables hold their clamped value.
    Chunks arrive in increasing state-index order of the free variables.
    """
    fixed = dict(fixed or {})
    q = g.q
    free = [v for v in range(g.n) if v not in fixed]
    total = _check_cap(q, len(free), cap)
    powers = q ** np.arange(len(free) - 1, -1, -1, dtype=np.int64)
    tables = [np.log(wf.table) for wf in g.weights]
    places = [q ** np.arange(wf.arity - 1, -1, -1, dtype=np.int64) for wf in g.weights]
    for start in range(0, total, _CHUNK):
        states = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        spins = np.empty((states.size, g.n), dtype=np.int64)
        if free:
            spins[:, free] = (states[:, None] // powers[None, :]) % q
        for v, s in fixed.items():
            spins[:, v] = s
        logw = np.zeros(states.size)
        for w, nb in g.constraints:
            idx = spins[:, list(nb)] @ places[w]
            logw += tables[w][idx]
        yield spins, logw


def _logsumexp_chunks(chunks: Iterator[np.ndarray]) -> float:
    top = -math.inf
    acc = 0.0
    for lw in chunks:
        m = float(lw.max())
        if m > top:
            acc = acc * math.exp(top - m) if top > -math.inf else 0.0
            top = m
        acc += float(np.exp(lw - top).sum())
    return top + math.log(acc)


def _as_spins(g: FactorGraph, sigma: Sequence[int]) -> np.ndarray:
    spins = np.asarray(sigma, dtype=np.int64)
    if spins.shape != (g.n,):
        raise ValueError(f"assignment has shape {spins.shape}, graph has {g.n} variables")
    if g.n and (spins.min() < 0 or spins.max() >= g.q):
        raise ValueError("assignment entries must be alphabet indices")
    return spins


def log_gibbs_weight(g: FactorGraph, sigma: Sequence[int]) -> float:
    spins = _as_spins(g, sigma)
    return float(sum(math.log(g.weights[w](spins[list(nb)])) for w, nb in g.constraints))


def gibbs_weight(g: FactorGraph, sigma: Sequence[int]) -> float:
    """Product of all constraint weights at ``sigma``."""
    spins = _as_spins(g, sigma)
    out = 1.0
    for w, nb in g.constraints:
        out *= g.weights[w](spins[list(nb)])
    return out


def log_partition_function(g: FactorGraph, cap: int = DEFAULT_STATE_CAP) -> float:
    return _logsumexp_chunks(lw for _, lw in _enumerate(g, cap=cap))


def partition_function(g: FactorGraph, cap: int = DEFAULT_STATE_CAP) -> PartitionFunction:
    log_z = log_partition_function(g, cap)
    z = math.exp(log_z) if log_z < 709.0 else None
    return PartitionFunction(log_z, z)


def gibbs_table(g: FactorGraph, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """The full Gibbs distribution as an array of shape ``(q,)*n``."""
    logw = np.concatenate([lw for _, lw in _enumerate(g, cap=cap)])
    p = np.exp(logw - logw.max())
    p /= p.sum()
    return p.reshape((g.q,) * g.n) if g.n else p.reshape(())


def _marginal_from_chunks(g, chunks, vars_: list[int]) -> np.ndarray:
    q = g.q
    place = q ** np.arange(len(vars_) - 1, -1, -1, dtype=np.int64)
    size = q ** len(vars_)
    logs = []
    idxs = []
    for spins, lw in chunks:
        logs.append(lw)
        idxs.append(spins[:, vars_] @ place if vars_ else np.zeros(lw.size, dtype=np.int64))
    lw = np.concatenate(logs)
    idx = np.concatenate(idxs)
    w = np.exp(lw - lw.max())
    out = np.bincount(idx, weights=w, minlength=size)
    return (out / out.sum()).reshape((q,) * len(vars_))


def gibbs_marginal(g: FactorGraph, vars: Sequence[int], cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """Exact joint marginal on ``vars`` as an array of shape ``(q,)*len(vars)``."""
    vars_ = [int(v) for v in vars]
    for v in vars_:
        if not 0 <= v < g.n:
            raise ValueError(f"unknown variable id {v}")
    return _marginal_from_chunks(g, _enumerate(g, cap=cap), vars_)


def all_single_marginals(g: FactorGraph, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """Exact one-variable marginals of every variable, shape ``(n, q)``."""
    if g.n == 0:
        return np.zeros((0, g.q))
    table = gibbs_table(g, cap)
    axes = tuple(range(g.n))
    return np.stack([table.sum(axis=axes[:v] + axes[v + 1 :]) for v in range(g.n)])


def conditional_marginal(
    g: FactorGraph, target: int, clamped: Mapping[int, int], cap: int = DEFAULT_STATE_CAP
) -> np.ndarray:
    """Marginal of ``target`` given the clamped variables (spin indices)."""
    if target in clamped:
        raise ValueError("target variable is clamped")
    for v in list(clamped) + [target]:
        if not 0 <= int(v) < g.n:
            raise ValueError(f"unknown variable id {v}")
    return _marginal_from_chunks(g, _enumerate(g, fixed=clamped, cap=cap), [int(target)])


def gibbs_sample(g: FactorGraph, count: int, seed: int, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """``count`` i.i.d. exact samples, shape ``(count, n)``, by inverting the cumulative law."""
    table = gibbs_table(g, cap).ravel()
    cdf = np.cumsum(table)
    cdf[-1] = 1.0
    u = _rng.stream(seed, "gibbs_sample").random(count)
    states = np.searchsorted(cdf, u, side="right")
    states = np.minimum(states, table.size - 1)
    powers = g.q ** np.arange(g.n - 1, -1, -1, dtype=np.int64)
    return (states[:, None] // powers[None, :]) % g.q


def remove_variable(g: FactorGraph, x: int) -> tuple[FactorGraph, dict[int, int]]:
    """``G - x``: drop ``x`` and every constraint touching it; returns the id map old -> new."""
    if not 0 <= x < g.n:
        raise ValueError(f"unknown variable id {x}")
    id_map = {v: (v if v < x else v - 1) for v in range(g.n) if v != x}
    constraints = tuple(
        (w, tuple(id_map[v] for v in nb)) for w, nb in g.constraints if x not in nb
    )
    return FactorGraph(g.alphabet, g.n - 1, g.weights, constraints), id_map


def induced_subgraph(g: FactorGraph, keep: Sequence[int]) -> tuple[FactorGraph, dict[int, int]]:
    """Keep the given variables and the constraints lying entirely inside them."""
    keep = sorted(set(int(v) for v in keep))
    id_map = {v: i for i, v in enumerate(keep)}
    constraints = tuple(
        (w, tuple(id_map[v] for v in nb)) for w, nb in g.constraints if all(v in id_map for v in nb)
    )
    return FactorGraph(g.alphabet, len(keep), g.weights, constraints), id_map


def gibbs_measure(g: FactorGraph, cap: int = DEFAULT_STATE_CAP) -> DiscreteMeasure:
    """The Gibbs measure as a :class:`DiscreteMeasure` over all ``q**n`` configurations."""
    table = gibbs_table(g, cap).ravel()
    powers = g.q ** np.arange(g.n - 1, -1, -1, dtype=np.int64)
    states = np.arange(table.size, dtype=np.int64)
    configs = (states[:, None] // powers[None, :]) % g.q
    probs = table / table.sum()
    return DiscreteMeasure(g.alphabet, configs, probs)


def connected_components(g: FactorGraph) -> list[list[int]]:
    parent = list(range(g.n))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for _, nb in g.constraints:
        r = find(nb[0])
        for v in nb[1:]:
            s = find(v)
            if s != r:
                parent[s] = r
    comps: dict[int, list[int]] = {}
    for v in range(g.n):
        comps.setdefault(find(v), []).append(v)
    return list(comps.values())
