"""Finite-size statistics for replica symmetry, spatial mixing, local structure and BP consistency."""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from .bp import Population, wasserstein_d1
from .core import DEFAULT_STATE_CAP, FactorGraph, all_single_marginals, gibbs_sample, gibbs_table, remove_variable
from .models import ModelSpec, sample_factor_graph
from .trees import CYCLIC, canonical_code, neighborhood, sample_gw_tree


@dataclass
class DiagnosticResult:
    statistic: float
    std_error: float = 0.0
    parameters: dict = field(default_factory=dict)
    per_seed: list = field(default_factory=list)

    def __post_init__(self):
        if self.statistic < -1e-12 or self.std_error < 0:
            raise ValueError("diagnostics are non-negative")

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "se": self.std_error, "parameters": self.parameters, "per_seed": self.per_seed}


def _mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0, 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def over_seeds(fn: Callable[[FactorGraph], DiagnosticResult], spec: ModelSpec, n: int, seeds: Sequence[int], **params) -> DiagnosticResult:
    """Average a single-graph diagnostic over ``G_n`` drawn with each seed; SE across seeds."""
    vals = [fn(sample_factor_graph(spec, n, s)).statistic for s in seeds]
    mean, se = _mean_se(vals)
    return DiagnosticResult(mean, se, {"n": n, "seeds": len(vals), **params}, vals)


def _tv(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def _marginal_of_table(table: np.ndarray, coords: Sequence[int]) -> np.ndarray:
    """Joint law at ``coords`` (in that order) from the full table."""
    others = tuple(ax for ax in range(table.ndim) if ax not in coords)
    m = table.sum(axis=others)
    kept = sorted(coords)
    return np.transpose(m, [kept.index(c) for c in coords])


def factorization_statistic(
    g: FactorGraph, k: int = 2, pairs: int | None = None, seed: int = 0, cap: int = DEFAULT_STATE_CAP
) -> DiagnosticResult:
    """Mean of ``||mu_{x_1..x_k} - prod_i mu_{x_i}||_TV`` over distinct coordinate tuples.

    ``pairs=None`` averages over every ``k``-subset exactly; otherwise that
    many uniformly random distinct tuples are drawn.
    """
    if not 1 <= k <= g.n:
        raise ValueError("need 1 <= k <= n")
    table = gibbs_table(g, cap)
    singles = [_marginal_of_table(table, [x]) for x in range(g.n)]
    if pairs is None:
        tuples = list(itertools.combinations(range(g.n), k))
    else:
        gen = _rng.stream(seed, "factorization", k)
        tuples = [tuple(gen.choice(g.n, size=k, replace=False).tolist()) for _ in range(pairs)]
    vals = []
    for tup in tuples:
        joint = _marginal_of_table(table, list(tup))
        prod = singles[tup[0]]
        for x in tup[1:]:
            prod = np.multiply.outer(prod, singles[x])
        vals.append(_tv(joint, prod))
    mean, se = _mean_se(vals)
    if pairs is None:
        se = 0.0
    return DiagnosticResult(mean, se, {"k": k, "tuples": len(tuples)}, [mean])


def variable_distances(g: FactorGraph, root: int) -> np.ndarray:
    """Factor-graph distance from ``root`` to every variable (variables sit at even distance); -1 if unreachable."""
    adj = g.adjacency()
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[root] = 0
    frontier = [root]
    while frontier:
        nxt = []
        for v in frontier:
            for a, _ in adj[v]:
                for u in g.constraints[a][1]:
                    if dist[u] < 0:
                        dist[u] = dist[v] + 2
                        nxt.append(u)
        frontier = nxt
    return dist


def nonreconstruction_statistic(
    g: FactorGraph, root: int, ell: int, samples: int | None = None, seed: int = 0, cap: int = DEFAULT_STATE_CAP
) -> DiagnosticResult:
    """``E_sigma ||mu_root - mu_root[.|sigma on variables farther than 2 ell]||_TV``.

    ``samples=None`` sums exactly over boundary configurations; otherwise the
    boundary is drawn from exact Gibbs samples.
    """
    dist = variable_distances(g, root)
    boundary = [int(y) for y in np.flatnonzero((dist > 2 * ell) | (dist < 0))]
    params = {"root": root, "ell": ell, "boundary": len(boundary)}
    if not boundary:
        return DiagnosticResult(0.0, 0.0, params, [0.0])
    table = gibbs_table(g, cap)
    joint = _marginal_of_table(table, [root] + boundary).reshape(g.q, -1)  # (q, q^|B|)
    pb = joint.sum(axis=0)
    root_marg = joint.sum(axis=1)
    cond = joint / pb[None, :]
    tvs = 0.5 * np.abs(cond - root_marg[:, None]).sum(axis=0)
    if samples is None:
        value = float((pb * tvs).sum())
        return DiagnosticResult(max(value, 0.0), 0.0, params, [value])
    configs = gibbs_sample(g, samples, _rng.child_seed(seed, "nonreconstruction", root, ell), cap)
    powers = g.q ** np.arange(len(boundary) - 1, -1, -1, dtype=np.int64)
    idx = configs[:, boundary] @ powers
    mean, se = _mean_se(tvs[idx])
    return DiagnosticResult(mean, se, {**params, "samples": samples}, [mean])


# ---------------------------------------------------------------------------
# local structure


def local_census(g: FactorGraph, ell: int, merge_symmetric: bool = True) -> dict[bytes, Fraction]:
    """Frequency of each depth-``ell`` neighbourhood class; all cyclic balls share one class."""
    adj = g.adjacency()
    counts: Counter = Counter()
    for x in range(g.n):
        t = neighborhood(g, x, ell, adj)
        counts[CYCLIC.code if t is CYCLIC else canonical_code(t, merge_symmetric)] += 1
    return {code: Fraction(c, g.n) for code, c in counts.items()}


def tree_census(spec: ModelSpec, ell: int, samples: int, seed: int, merge_symmetric: bool = True) -> dict[bytes, float]:
    """Monte Carlo law of the class of the depth-``ell`` Galton-Watson tree."""
    gen = _rng.stream(seed, "tree_census", ell)
    counts: Counter = Counter()
    for _ in range(samples):
        counts[canonical_code(sample_gw_tree(spec, ell, int(gen.integers(1 << 62))), merge_symmetric)] += 1
    return {code: c / samples for code, c in counts.items()}


def census_distance(
    spec: ModelSpec, n: int, ell: int, graph_seeds: Sequence[int] | int, tree_samples: int, seed: int
) -> DiagnosticResult:
    """TV distance between the seed-averaged census of ``G_n`` and the tree law."""
    seeds = range(graph_seeds) if isinstance(graph_seeds, int) else list(graph_seeds)
    avg: Counter = Counter()
    for s in seeds:
        for code, f in local_census(sample_factor_graph(spec, n, s), ell).items():
            avg[code] += float(f) / len(seeds)
    ref = tree_census(spec, ell, tree_samples, seed)
    keys = set(avg) | set(ref)
    value = 0.5 * sum(abs(avg.get(c, 0.0) - ref.get(c, 0.0)) for c in keys)
    return DiagnosticResult(value, 0.0, {"n": n, "ell": ell, "graph_seeds": len(seeds), "tree_samples": tree_samples, "classes": len(keys)}, [value])


def bp_empirical_distance(
    g: FactorGraph, tree_code: bytes, ell: int, reference: Population, merge_symmetric: bool = False, cap: int = DEFAULT_STATE_CAP
) -> DiagnosticResult:
    """``d_1`` between the exact marginals of variables whose depth-``ell`` class is ``tree_code`` and ``reference``.

    With no such variable the empirical side is a single uniform point.
    """
    adj = g.adjacency()
    members = []
    for x in range(g.n):
        t = neighborhood(g, x, ell, adj)
        if t is not CYCLIC and canonical_code(t, merge_symmetric) == tree_code:
            members.append(x)
    if members:
        pts = all_single_marginals(g, cap)[members]
    else:
        pts = np.full((1, g.q), 1.0 / g.q)
    value = wasserstein_d1(Population(pts), reference)
    return DiagnosticResult(value, 0.0, {"ell": ell, "members": len(members)}, [value])


# ---------------------------------------------------------------------------
# cavity formula


def cavity_prediction(g: FactorGraph, x: int, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """Marginal of ``x`` predicted from the exact marginals of ``G - x``."""
    q = g.q
    adj = g.adjacency()
    touching = sorted({a for a, _ in adj[x]})
    if not touching:
        return np.full(q, 1.0 / q)
    gx, id_map = remove_variable(g, x)
    marg = all_single_marginals(gx, cap) if gx.n else np.zeros((0, q))
    log_num = np.zeros(q)
    for a in touching:
        w, nb = g.constraints[a]
        psi = g.weights[w]
        others = sorted({y for y in nb if y != x})
        msg = np.zeros(q)
        for omega in range(q):
            total = 0.0
            for s in itertools.product(range(q), repeat=len(others)):
                val = dict(zip(others, s))
                val[x] = omega
                weight = psi([val[y] for y in nb])
                for y, sy in zip(others, s):
                    weight *= marg[id_map[y], sy]
                total += weight
            msg[omega] = total
        log_num += np.log(msg)
    z = np.exp(log_num - log_num.max())
    return z / z.sum()


def cavity_consistency(g: FactorGraph, cap: int = DEFAULT_STATE_CAP) -> DiagnosticResult:
    """``(1/n) sum_x sum_w |mu_x(w) - cavity prediction(w)|``."""
    if g.n == 0:
        return DiagnosticResult(0.0)
    marg = all_single_marginals(g, cap)
    per = [float(np.abs(marg[x] - cavity_prediction(g, x, cap)).sum()) for x in range(g.n)]
    return DiagnosticResult(float(np.mean(per)), 0.0, {"n": g.n}, [float(np.mean(per))])
