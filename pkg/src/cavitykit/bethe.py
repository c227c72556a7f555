"""Bethe free energy (tree and Poissonised forms), exact free energy, and telescoping increments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as _rng
from .bp import BPResult, Population, bp_run, constraint_messages, fresh_members
from .core import DEFAULT_STATE_CAP, FactorGraph, log_partition_function
from .models import ModelSpec, sample_factor_graph
from .trees import RootedTree, sample_root_stars


@dataclass
class BetheTerms:
    phi: float
    hat_phi: list = field(default_factory=list)
    tilde_phi: list = field(default_factory=list)
    arities: list = field(default_factory=list)

    def __post_init__(self):
        vals = [self.phi, *self.hat_phi, *self.tilde_phi]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("Bethe terms must be finite")

    def total(self) -> float:
        return self.phi + sum(h / k - t for h, t, k in zip(self.hat_phi, self.tilde_phi, self.arities))


@dataclass
class FreeEnergyEstimate:
    value: float
    std_error: float
    method: str
    samples: int

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("standard error must be non-negative")

    def to_dict(self) -> dict:
        return {"value": self.value, "se": self.std_error, "samples": self.samples, "method": self.method}


def _estimate(values: np.ndarray, method: str) -> FreeEnergyEstimate:
    values = np.asarray(values, dtype=float)
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return FreeEnergyEstimate(float(values.mean()), se, method, int(len(values)))


def _logsumexp(x: np.ndarray, axis=-1) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _star_terms(
    weights, q: int, owner: np.ndarray, wf: np.ndarray, slot: np.ndarray, incoming: list, count: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised local terms for ``count`` stars.

    ``incoming[c]`` holds the ``k - 1`` leaf points of constraint ``c``.
    Returns ``(phi per star, hat_phi, tilde_phi, arity, log_norm)``; all but
    the first are per constraint, ``log_norm`` being the log-normaliser of
    each constraint message.
    """
    m = len(owner)
    raw = np.empty((m, q))
    for w in np.unique(wf) if m else []:
        psi = weights[w]
        for p in range(psi.arity):
            sel = np.flatnonzero((wf == w) & (slot == p))
            if sel.size:
                raw[sel] = constraint_messages(psi, p, np.stack([incoming[c] for c in sel]), normalise=False)
    assert np.all(raw > 0), "constraint messages must be strictly positive"
    log_norm = np.log(raw.sum(axis=1))
    log_hat = np.log(raw) - log_norm[:, None]
    total = np.zeros((count, q))
    np.add.at(total, owner, log_hat)
    phi = _logsumexp(total)
    cavity = total[owner] - log_hat  # log of the unnormalised tilde eta
    log_norm_cav = _logsumexp(cavity) if m else np.zeros(0)
    tilde_phi = phi[owner] - log_norm_cav if m else np.zeros(0)
    log_tilde = cavity - log_norm_cav[:, None] if m else np.zeros((0, q))
    hat_phi = _logsumexp(log_tilde + np.log(raw)) if m else np.zeros(0)
    arity = np.array([weights[w].arity for w in wf], dtype=float)
    return phi, hat_phi, tilde_phi, arity, log_norm


def bethe_local_terms(star: RootedTree, incoming, seed: int | None = None) -> BetheTerms:
    """``phi``, ``hat_phi_a`` and ``tilde_phi_a`` of a depth-one star.

    ``incoming`` lists, per root constraint, its ``k - 1`` leaf points in slot
    order; a :class:`Population` instead draws them (using ``seed``).
    """
    if star.height() > 1:
        raise ValueError("bethe_local_terms needs a star (depth at most one)")
    cons = star.root.children
    q = star.alphabet.size
    if isinstance(incoming, Population):
        gen = _rng.stream(seed or 0, "bethe_local_terms")
        incoming = [incoming.draw(gen, len(a.children)) for a in cons]
    if len(incoming) != len(cons):
        raise ValueError("one list of incoming points per root constraint")
    inc = []
    for a, pts in zip(cons, incoming):
        pts = np.asarray(pts, dtype=float).reshape(-1, q) if len(pts) else np.zeros((0, q))
        if pts.shape[0] != star.weights[a.wf].arity - 1:
            raise ValueError("incoming points do not match the constraint's leaf slots")
        inc.append(pts)
    owner = np.zeros(len(cons), dtype=np.int64)
    wf = np.array([a.wf for a in cons], dtype=np.int64)
    slot = np.array([a.slot for a in cons], dtype=np.int64)
    phi, hat_phi, tilde_phi, arity, _ = _star_terms(star.weights, q, owner, wf, slot, inc, 1)
    return BetheTerms(float(phi[0]), hat_phi.tolist(), tilde_phi.tolist(), [int(k) for k in arity])


def bethe_free_energy(spec: ModelSpec, boundary: Population, samples: int, seed: int) -> FreeEnergyEstimate:
    """Monte Carlo over root stars of the Galton-Watson tree with leaves drawn from ``boundary``."""
    gen = _rng.stream(seed, "bethe_free_energy")
    q = spec.q
    owner, wf, slot = sample_root_stars(spec, samples, gen)
    arities = np.array([w.arity for w in spec.weights])
    incoming = [boundary.draw(gen, arities[w] - 1) for w in wf]
    phi, hat_phi, tilde_phi, arity, _ = _star_terms(spec.weights, q, owner, wf, slot, incoming, samples)
    per = phi.copy()
    np.add.at(per, owner, hat_phi / arity - tilde_phi)
    return _estimate(per, "bethe")


def poissonized_bethe(spec: ModelSpec, boundary: Population, samples: int, seed: int) -> FreeEnergyEstimate:
    """``E[phi] + sum_psi rho_psi (E[hat_phi_psi] - sum_j E[tilde_phi_{psi,j}])``.

    Each sample yields one scalar: a fresh ``phi`` from per-slot ``Po(rho)``
    counts, plus one ``hat_phi_psi`` and one ``tilde_phi_{psi,j}`` per type and
    slot, weighted by the densities.

    ``phi`` and ``tilde_phi`` are evaluated with unnormalised constraint
    messages.  The message normalisers enter ``phi`` once per root constraint
    and ``tilde_phi`` with weight ``rho``, so they cancel in expectation; dropping
    them leaves the mean unchanged and removes the degree noise (a flat
    weight function then gives ``ln |Omega|`` on every sample).
    """
    gen = _rng.stream(seed, "poissonized_bethe")
    q = spec.q
    pop = boundary.points
    owner, wf, slot = sample_root_stars(spec, samples, gen)
    arities = np.array([w.arity for w in spec.weights])
    incoming = [boundary.draw(gen, arities[w] - 1) for w in wf]
    phi, _, _, _, log_norm = _star_terms(spec.weights, q, owner, wf, slot, incoming, samples)
    per = phi.copy()
    np.add.at(per, owner, log_norm)
    for w, (psi, rho) in enumerate(spec.families):
        if rho == 0:
            continue
        k = psi.arity
        etas = fresh_members(spec, pop, samples * k, gen).reshape(samples, k, q)
        args = [etas[:, h, :] for h in range(k)]
        letters = "abcdefghijklmnopqrstuvwxyz"[:k]
        hat = np.einsum(letters + "," + ",".join("Z" + c for c in letters) + "->Z", psi.tensor(), *args)
        per += rho * np.log(hat)
        eta1 = fresh_members(spec, pop, samples * k, gen).reshape(samples, k, q)
        for j in range(k):
            leaves = pop[gen.integers(0, len(pop), size=(samples, k - 1))]
            msg = constraint_messages(psi, j, leaves, normalise=False)
            per -= rho * np.log((eta1[:, j, :] * msg).sum(axis=1))
    return _estimate(per, "poissonized_bethe")


def free_energy_exact(
    spec: ModelSpec, n: int, seeds: Sequence[int] | int, cap: int = DEFAULT_STATE_CAP
) -> FreeEnergyEstimate:
    """Mean of ``ln Z / n`` over ``G_n`` drawn with the given seeds (or ``range(seeds)``)."""
    seeds = range(seeds) if isinstance(seeds, int) else list(seeds)
    vals = [log_partition_function(sample_factor_graph(spec, n, s), cap) / n for s in seeds]
    return _estimate(np.array(vals), "exact")


# ---------------------------------------------------------------------------
# telescoping increments


@dataclass
class Increment:
    n: int
    increment: FreeEnergyEstimate  # E ln Z''' - E ln Z''
    new_variable: FreeEnergyEstimate  # E ln Z''' / Z'
    new_constraints: FreeEnergyEstimate  # E ln Z'' / Z'

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "increment": self.increment.to_dict(),
            "new_variable": self.new_variable.to_dict(),
            "new_constraints": self.new_constraints.to_dict(),
        }


def _uniform_tuples(gen, m: int, k: int, n: int) -> list:
    return [tuple(r) for r in gen.integers(0, n, size=(m, k)).tolist()] if n else []


def _tuples_through_new(gen, m: int, k: int, n: int, exact: bool) -> list:
    """``m`` tuples on ``[n+1]**k`` containing ``n`` (the new variable)."""
    if n == 0:
        return [(0,) * k] * m
    out = []
    if not exact:
        for _ in range(m):
            nb = gen.integers(0, n, size=k)
            nb[int(gen.integers(k))] = n
            out.append(tuple(nb.tolist()))
        return out
    # number of occurrences c >= 1 has law proportional to C(k, c) n^(k - c)
    cs = np.arange(1, k + 1)
    w = np.array([math.comb(k, c) * float(n) ** (k - c) for c in cs])
    counts = gen.choice(cs, size=m, p=w / w.sum())
    for c in counts:
        nb = gen.integers(0, n, size=k)
        nb[gen.choice(k, size=int(c), replace=False)] = n
        out.append(tuple(nb.tolist()))
    return out


def ass_sample(spec: ModelSpec, n: int, gen: np.random.Generator, exact: bool = True):
    """Coupled ``(G', G'', G''')`` with ``G''`` distributed as ``G_n`` and ``G'''`` as ``G_{n+1}``.

    With ``exact`` the rates are those of the finite model; otherwise the
    large-``n`` version (``Po(n rho')`` base constraints, ``Po(k rho)`` new
    constraints each meeting the new variable once).
    """
    base, extra, new = [], [], []
    for w, (psi, rho) in enumerate(spec.families):
        k = psi.arity
        shrink = (n / (n + 1)) ** k
        base_rate = (n + 1 if exact else n) * shrink * rho
        m1 = int(gen.poisson(base_rate))
        m2 = int(gen.poisson(max(n * rho - base_rate, 0.0)))
        new_rate = (n + 1) * rho * (1 - shrink) if exact else k * rho
        m3 = int(gen.poisson(new_rate))
        base += [(w, nb) for nb in _uniform_tuples(gen, m1, k, n)]
        extra += [(w, nb) for nb in _uniform_tuples(gen, m2, k, n)]
        new += [(w, nb) for nb in _tuples_through_new(gen, m3, k, n, exact)]
    g1 = FactorGraph(spec.alphabet, n, spec.weights, tuple(base))
    g2 = FactorGraph(spec.alphabet, n, spec.weights, tuple(base + extra))
    g3 = FactorGraph(spec.alphabet, n + 1, spec.weights, tuple(base + new))
    return g1, g2, g3


def ass_increments(
    spec: ModelSpec,
    n_max: int,
    seeds_per_n: int,
    seed: int,
    exact: bool = True,
    cap: int = DEFAULT_STATE_CAP,
) -> list[Increment]:
    """Exact-enumeration estimates of ``E ln Z_{n+1} - E ln Z_n`` for ``n = 0..n_max``.

    ``G_0`` is the empty graph with ``Z = 1``.  The increment is the paired
    difference ``ln Z''' - ln Z''`` over a shared ``G'``.
    """
    out = []
    for n in range(n_max + 1):
        d_new, d_con = np.empty(seeds_per_n), np.empty(seeds_per_n)
        for r in range(seeds_per_n):
            gen = _rng.stream(seed, "ass", n, r)
            g1, g2, g3 = ass_sample(spec, n, gen, exact)
            z1 = log_partition_function(g1, cap)
            d_new[r] = log_partition_function(g3, cap) - z1
            d_con[r] = log_partition_function(g2, cap) - z1
        out.append(
            Increment(n, _estimate(d_new - d_con, "ass"), _estimate(d_new, "ass_new_variable"), _estimate(d_con, "ass_new_constraints"))
        )
    return out


def telescoped_free_energy(increments: Sequence[Increment], n: int) -> FreeEnergyEstimate:
    """``(1/n) sum_{h=1}^{n} E ln Z_h / Z_{h-1}`` from the increments at ``0..n-1``."""
    incs = [i for i in increments if i.n < n]
    if len(incs) != n:
        raise ValueError(f"need increments for 0..{n - 1}")
    value = sum(i.increment.value for i in incs) / n
    se = math.sqrt(sum(i.increment.std_error**2 for i in incs)) / n
    return FreeEnergyEstimate(value, se, "ass_telescoped", sum(i.increment.samples for i in incs))


# ---------------------------------------------------------------------------
# checks


def chen_stein_check(d: float, f: Callable[[np.ndarray], np.ndarray], draws: int, seed: int):
    """Monte Carlo of both sides of ``E[X f(X)] = d E[f(X + 1)]`` for ``X ~ Po(d)``.

    Returns ``((lhs, se), (rhs, se))``.
    """
    x = _rng.stream(seed, "chen_stein").poisson(d, size=draws).astype(float)
    lhs = x * f(x)
    rhs = d * f(x + 1)
    s = math.sqrt(draws)
    return (float(lhs.mean()), float(lhs.std(ddof=1) / s)), (float(rhs.mean()), float(rhs.std(ddof=1) / s))


def graph_bethe_free_energy(g: FactorGraph, result: BPResult | None = None) -> float:
    """Sum over variables of the local Bethe terms, with BP messages of ``g``.

    On a tree factor graph with converged messages this is ``ln Z`` exactly.
    """
    res = result if result is not None else bp_run(g, damping=0.0, tol=1e-14)
    q = g.q
    edge_var = np.array([v for _, _, v in res.edges], dtype=np.int64)
    total = np.zeros((g.n, q))
    if len(edge_var):
        np.add.at(total, edge_var, np.log(res.to_variable))
    value = float(_logsumexp(total).sum()) if g.n else 0.0
    for e, (a, p, v) in enumerate(res.edges):
        w, nb = g.constraints[a]
        if p == 0:
            start = e
            k = len(nb)
            args = [res.to_constraint[start + h] for h in range(k)]
            letters = "abcdefghijklmnopqrstuvwxyz"[:k]
            hat = np.einsum(letters + "," + ",".join(letters), g.weights[w].tensor(), *args)
            value += math.log(float(hat))
        value -= math.log(float((res.to_constraint[e] * res.to_variable[e]).sum()))
    return value
