"""Belief Propagation: message algebra, loopy BP, tree recursion, population dynamics.

Points of the simplex ``P(Omega)`` are plain float arrays of length ``q``;
a :class:`Population` stacks ``N`` of them as an ``(N, q)`` array.
"""

from __future__ import annotations

import functools
import math
import string
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix

from . import rng as _rng
from .core import FactorGraph, WeightFunction
from .models import ModelSpec
from .trees import RootedTree, VarNode, sample_gw_tree, truncate

WASSERSTEIN_CAP = 2000


class NumericalUnderflowWarning(RuntimeWarning):
    pass


@dataclass
class Population:
    points: np.ndarray
    generation: int = 0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise ValueError("a population needs at least one point, shape (N, q)")
        if np.any(pts < 0) or np.any(np.abs(pts.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("population members must be probability vectors")
        self.points = pts

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def q(self) -> int:
        return self.points.shape[1]

    def draw(self, gen: np.random.Generator, count) -> np.ndarray:
        return self.points[gen.integers(0, self.size, size=count)]

    def to_dict(self) -> dict:
        return {"generation": self.generation, "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, data) -> "Population":
        return cls(np.array(data["points"], dtype=float), int(data.get("generation", 0)))


def uniform_population(size: int, q: int, jitter: float = 0.0, seed: int = 0) -> Population:
    """``size`` copies of the uniform point, optionally mixed with Dirichlet(1) noise."""
    pts = np.full((size, q), 1.0 / q)
    if jitter > 0:
        noise = _rng.stream(seed, "population_init").dirichlet(np.ones(q), size=size)
        pts = (1 - jitter) * pts + jitter * noise
        pts /= pts.sum(axis=1, keepdims=True)
    return Population(pts)


# ---------------------------------------------------------------------------
# message algebra


def _normalise(x: np.ndarray) -> np.ndarray:
    s = x.sum(axis=-1, keepdims=True)
    return x / s


@functools.lru_cache(maxsize=None)
def _einsum_message(k: int, slot: int) -> str:
    letters = string.ascii_letters[:k]
    batch = "Z"
    ins = [batch + letters[h] for h in range(k) if h != slot]
    return letters + "," + ",".join(ins) + "->" + batch + letters[slot]


@functools.lru_cache(maxsize=None)
def _single_message(k: int, slot: int) -> str:
    letters = string.ascii_letters[:k]
    return letters + "," + ",".join(letters[h] for h in range(k) if h != slot) + "->" + letters[slot]


def constraint_messages(psi: WeightFunction, slot: int, incoming: np.ndarray, normalise: bool = True) -> np.ndarray:
    """Batched constraint-to-variable messages.

    ``incoming`` has shape ``(M, k-1, q)`` (the other slots in order); the
    result has shape ``(M, q)``.
    """
    k = psi.arity
    incoming = np.asarray(incoming, dtype=float)
    if incoming.shape[1:2] != (k - 1,):
        raise ValueError(f"expected {k - 1} incoming messages, got {incoming.shape[1]}")
    if not 0 <= slot < k:
        raise ValueError(f"slot {slot} outside arity {k}")
    if k == 1:
        out = np.broadcast_to(psi.table, (incoming.shape[0], psi.q)).copy()
    else:
        args = [incoming[:, h, :] for h in range(k - 1)]
        out = np.einsum(_einsum_message(k, slot), psi.tensor(), *args)
    return _normalise(out) if normalise else out


def bp_constraint_message(psi: WeightFunction, slot: int, incoming: Sequence[np.ndarray]) -> np.ndarray:
    """``eta_hat(w) ∝ sum over sigma with sigma[slot] = w of psi(sigma) * prod incoming``."""
    inc = np.asarray(list(incoming), dtype=float).reshape(len(incoming), -1) if len(incoming) else np.zeros((0, psi.q))
    return constraint_messages(psi, slot, inc[None, :, :])[0]


def combine_log(logs: np.ndarray, q: int) -> np.ndarray:
    """Normalised ``exp`` of a summed log-message, warning if an entry underflows to 0."""
    if logs.size == 0:
        return np.zeros((0, q)) if logs.ndim == 2 else np.full(q, 1.0 / q)
    z = np.exp(logs - logs.max(axis=-1, keepdims=True))
    out = _normalise(z)
    if np.any(out == 0):
        warnings.warn("message product underflowed to zero in some entry", NumericalUnderflowWarning)
    return out


def bp_combine(messages: Sequence[np.ndarray], q: int | None = None) -> np.ndarray:
    """``eta(w) ∝ prod_a eta_hat_a(w)``; the empty product is uniform."""
    if len(messages) == 0:
        if q is None:
            raise ValueError("need q for an empty combine")
        return np.full(q, 1.0 / q)
    msgs = np.asarray(messages, dtype=float)
    return combine_log(np.log(msgs).sum(axis=0), msgs.shape[1])


# ---------------------------------------------------------------------------
# loopy BP on a finite graph


@dataclass
class BPResult:
    to_variable: np.ndarray
    to_constraint: np.ndarray
    edges: list
    marginals: np.ndarray
    converged: bool
    residual: float
    iterations: int


def bp_run(g: FactorGraph, damping: float = 0.5, tol: float = 1e-10, max_iters: int = 10_000) -> BPResult:
    """Synchronous damped BP.

    Edges are (constraint, position) pairs, so a constraint that repeats a
    variable simply contributes two edges at it.  Stops once the largest
    change of any message is at most ``tol``.
    """
    if not 0 <= damping < 1:
        raise ValueError("damping must lie in [0, 1)")
    q = g.q
    edges = [(a, p, v) for a, (_, nb) in enumerate(g.constraints) for p, v in enumerate(nb)]
    edge_var = np.array([v for _, _, v in edges], dtype=np.int64)
    offsets = np.cumsum([0] + [len(nb) for _, nb in g.constraints])
    E = len(edges)
    to_var = np.full((E, q), 1.0 / q)
    to_con = np.full((E, q), 1.0 / q)
    groups: dict[int, list[int]] = {}
    for a, (w, _) in enumerate(g.constraints):
        groups.setdefault(w, []).append(a)
    groups_arr = {w: np.array(cs, dtype=np.int64) for w, cs in groups.items()}

    def sweep(to_con_old):
        new_var = np.empty_like(to_var)
        for w, cs in groups_arr.items():
            psi = g.weights[w]
            k = psi.arity
            idx = offsets[cs][:, None] + np.arange(k)[None, :]
            block = to_con_old[idx]  # (M, k, q)
            for p in range(k):
                others = [h for h in range(k) if h != p]
                new_var[idx[:, p]] = constraint_messages(psi, p, block[:, others, :])
        logs = np.log(new_var)
        total = np.zeros((g.n, q))
        np.add.at(total, edge_var, logs)
        return new_var, total

    residual = math.inf
    converged = E == 0
    it = 0
    if E:
        for it in range(1, max_iters + 1):
            new_var, _ = sweep(to_con)
            logs_old = np.log(to_var)
            total_old = np.zeros((g.n, q))
            np.add.at(total_old, edge_var, logs_old)
            new_con = combine_log(total_old[edge_var] - logs_old, q)
            new_var = (1 - damping) * new_var + damping * to_var
            new_con = (1 - damping) * new_con + damping * to_con
            residual = float(max(np.abs(new_var - to_var).max(), np.abs(new_con - to_con).max()))
            to_var, to_con = new_var, new_con
            if residual <= tol:
                converged = True
                break
    else:
        residual = 0.0
    total = np.zeros((g.n, q))
    if E:
        np.add.at(total, edge_var, np.log(to_var))
    marginals = combine_log(total, q) if g.n else np.zeros((0, q))
    return BPResult(to_var, to_con, edges, marginals, converged, residual, it)


# ---------------------------------------------------------------------------
# tree recursion


def tree_root_marginal(t: RootedTree, boundary: Population, seed: int | np.random.Generator) -> np.ndarray:
    """One draw of the depth-``l`` root recursion.

    Variables sitting at the truncation depth take i.i.d. points of
    ``boundary``; every other variable combines its constraint messages
    (an empty combine is uniform).
    """
    gen = seed if isinstance(seed, np.random.Generator) else _rng.stream(seed, "tree_root_marginal")
    q = t.alphabet.size

    def up(v: VarNode, d: int) -> np.ndarray:
        if d == t.depth:
            return boundary.points[gen.integers(boundary.size)]
        if not v.children:
            return np.full(q, 1.0 / q)
        total = np.zeros(q)
        for a in v.children:
            psi = t.weights[a.wf]
            if psi.arity == 1:
                msg = np.asarray(psi.table, dtype=float)
            else:
                msg = np.einsum(_single_message(psi.arity, a.slot), psi.tensor(), *[up(c, d + 1) for c in a.children])
            total += np.log(msg / msg.sum())
        return combine_log(total, q)

    return up(t.root, 0)


def tree_class_reference(t: RootedTree, boundary: Population, samples: int, seed: int) -> Population:
    """Empirical law of the root recursion on a fixed tree, as a population."""
    gen = _rng.stream(seed, "tree_class_reference")
    return Population(np.array([tree_root_marginal(t, boundary, gen) for _ in range(samples)]))


# ---------------------------------------------------------------------------
# population dynamics


def fresh_members(spec: ModelSpec, pop: np.ndarray, count: int, gen: np.random.Generator) -> np.ndarray:
    """``count`` root marginals of fresh depth-1 stars whose leaves are drawn from ``pop``."""
    N, q = pop.shape
    total = np.zeros((count, q))
    counts = gen.poisson(spec.offspring_rates(), size=(count, len(spec.weights)))
    for w, psi in enumerate(spec.weights):
        c = counts[:, w]
        m = int(c.sum())
        if m == 0:
            continue
        k = psi.arity
        owner = np.repeat(np.arange(count), c)
        slots = gen.integers(0, k, size=m)
        incoming = pop[gen.integers(0, N, size=(m, k - 1))]  # (m, k-1, q)
        msgs = np.empty((m, q))
        for p in range(k):
            sel = slots == p
            if sel.any():
                msgs[sel] = constraint_messages(psi, p, incoming[sel])
        np.add.at(total, owner, np.log(msgs))
    return combine_log(total, q)


def population_sweep(spec: ModelSpec, pop: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """Replace every member by the root marginal of a fresh depth-1 star fed from ``pop``."""
    return fresh_members(spec, pop, pop.shape[0], gen)


def population_dynamics(spec: ModelSpec, init: Population, sweeps: int, seed: int) -> Population:
    """Iterate the distributional BP recursion ``sweeps`` times."""
    pop = init.points
    for s in range(sweeps):
        pop = population_sweep(spec, pop, _rng.stream(seed, "population_dynamics", s))
    return Population(pop, init.generation + sweeps)


def fixed_point_population(spec: ModelSpec, size: int = 10_000, sweeps: int = 100, seed: int = 0, jitter: float = 0.1) -> Population:
    """Population dynamics from a jittered uniform start, the default way to get a boundary law."""
    init = uniform_population(size, spec.q, jitter, _rng.child_seed(seed, "fixed_point_init"))
    return population_dynamics(spec, init, sweeps, _rng.child_seed(seed, "fixed_point_sweeps"))


# ---------------------------------------------------------------------------
# Wasserstein distance on P(Omega) with total-variation ground metric


def tv_cost(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return 0.5 * np.abs(p[:, None, :] - q[None, :, :]).sum(axis=2)


def wasserstein_d1(p: Population | np.ndarray, q: Population | np.ndarray) -> float:
    """Exact ``d_1`` between two uniform empirical laws on the simplex.

    Binary alphabets reduce to the one-dimensional CDF formula; otherwise an
    assignment problem (equal sizes) or a transport LP (unequal sizes).
    """
    a = p.points if isinstance(p, Population) else np.asarray(p, float)
    b = q.points if isinstance(q, Population) else np.asarray(q, float)
    if a.shape[1] != b.shape[1]:
        raise ValueError("populations live on different simplices")
    if a.shape[1] == 2:
        return _w1_line(a[:, 0], b[:, 0])
    if max(len(a), len(b)) > WASSERSTEIN_CAP:
        raise ValueError(f"exact transport limited to {WASSERSTEIN_CAP} points per side")
    cost = tv_cost(a, b)
    if len(a) == len(b):
        r, c = linear_sum_assignment(cost)
        return float(cost[r, c].mean())
    return _transport_lp(cost, np.full(len(a), 1 / len(a)), np.full(len(b), 1 / len(b)))


def _w1_line(x: np.ndarray, y: np.ndarray) -> float:
    # TV between (t, 1-t) and (s, 1-s) is |t - s|
    grid = np.sort(np.concatenate([x, y]))
    xs, ys = np.sort(x), np.sort(y)
    fx = np.searchsorted(xs, grid[:-1], side="right") / len(xs)
    fy = np.searchsorted(ys, grid[:-1], side="right") / len(ys)
    return float(np.sum(np.abs(fx - fy) * np.diff(grid)))


def _transport_lp(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    n, m = cost.shape
    rows = np.concatenate([np.repeat(np.arange(n), m), n + np.tile(np.arange(m), n)])
    cols = np.concatenate([np.arange(n * m), np.arange(n * m)])
    A = coo_matrix((np.ones(2 * n * m), (rows, cols)), shape=(n + m, n * m)).tocsr()
    res = linprog(cost.ravel(), A_eq=A, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


# ---------------------------------------------------------------------------
# martingale check


def moment_probe(omega: int, power: int = 1) -> Callable[[np.ndarray], float]:
    def probe(p: np.ndarray) -> float:
        return float(p[omega] ** power)

    probe.__name__ = f"eta[{omega}]^{power}"
    return probe


def martingale_residual(
    spec: ModelSpec,
    ell: int,
    probe: Callable[[np.ndarray], float] | Sequence[Callable[[np.ndarray], float]],
    samples: int,
    seed: int,
    boundary: Population | None = None,
) -> tuple[float, float] | list[tuple[float, float]]:
    """Estimate ``E[probe(X_{l+1})] - E[probe(X_l)]`` on paired tree prefixes, with its SE.

    Without ``boundary`` the fixed-point population of ``spec`` is computed
    first.  Passing several probes evaluates them on the same draws.
    """
    probes = list(probe) if isinstance(probe, (list, tuple)) else [probe]
    if boundary is None:
        boundary = fixed_point_population(spec, seed=_rng.child_seed(seed, "martingale_boundary"))
    gen = _rng.stream(seed, "martingale_residual", ell)
    diffs = np.empty((samples, len(probes)))
    for i in range(samples):
        t = sample_gw_tree(spec, ell + 1, int(gen.integers(1 << 62)))
        deep = tree_root_marginal(t, boundary, gen)
        shallow = tree_root_marginal(truncate(t, ell), boundary, gen)
        diffs[i] = [f(deep) - f(shallow) for f in probes]
    mean = diffs.mean(axis=0)
    se = diffs.std(axis=0, ddof=1) / math.sqrt(samples) if samples > 1 else np.zeros(len(probes))
    out = [(float(m), float(s)) for m, s in zip(mean, se)]
    return out if isinstance(probe, (list, tuple)) else out[0]
