"""Regularity partitions of a discrete measure: index, REG1-REG4 checks and refinement.

Coordinates are split by a :class:`CoordinatePartition` ``V``; support points
of the measure by a :class:`ConfigPartition` ``S``.  Block averages
``sigma[.|U]`` are normalised (mean of ``sigma_x`` over ``x in U``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .core import DiscreteMeasure
from .cutmetric import Coupling, EmbeddedMeasure, embed, strong_cut_distance

DEFAULT_BUDGET = 1 << 16


def _as_blocks(blocks, universe: int, what: str) -> list[np.ndarray]:
    out = [np.array(sorted(int(x) for x in b), dtype=np.int64) for b in blocks]
    if any(b.size == 0 for b in out):
        raise ValueError(f"{what} blocks must be non-empty")
    flat = np.concatenate(out) if out else np.zeros(0, np.int64)
    if flat.size != universe or not np.array_equal(np.sort(flat), np.arange(universe)):
        raise ValueError(f"{what} blocks must be a disjoint cover of 0..{universe - 1}")
    return out


@dataclass
class CoordinatePartition:
    blocks: list
    n: int

    def __post_init__(self):
        self.blocks = _as_blocks(self.blocks, self.n, "coordinate")

    def __len__(self) -> int:
        return len(self.blocks)

    @classmethod
    def trivial(cls, n: int) -> "CoordinatePartition":
        return cls([range(n)], n)

    @classmethod
    def singletons(cls, n: int) -> "CoordinatePartition":
        return cls([[x] for x in range(n)], n)

    def labels(self) -> np.ndarray:
        lab = np.empty(self.n, dtype=np.int64)
        for i, b in enumerate(self.blocks):
            lab[b] = i
        return lab

    def refines(self, other: "CoordinatePartition") -> bool:
        lab = other.labels()
        return all(len(set(lab[b].tolist())) == 1 for b in self.blocks)


@dataclass
class ConfigPartition:
    """Blocks of row indices into ``m.configs``."""

    blocks: list
    size: int

    def __post_init__(self):
        self.blocks = _as_blocks(self.blocks, self.size, "configuration")

    def __len__(self) -> int:
        return len(self.blocks)

    @classmethod
    def trivial(cls, m: DiscreteMeasure) -> "ConfigPartition":
        return cls([range(m.support_size)], m.support_size)

    @classmethod
    def singletons(cls, m: DiscreteMeasure) -> "ConfigPartition":
        return cls([[s] for s in range(m.support_size)], m.support_size)

    def labels(self) -> np.ndarray:
        lab = np.empty(self.size, dtype=np.int64)
        for j, b in enumerate(self.blocks):
            lab[b] = j
        return lab

    def refines(self, other: "ConfigPartition") -> bool:
        lab = other.labels()
        return all(len(set(lab[b].tolist())) == 1 for b in self.blocks)


@dataclass
class Witness:
    i: int
    j: int
    U: np.ndarray  # coordinates
    T: np.ndarray  # support row indices
    omega: int
    A: np.ndarray  # boolean over Omega, the maximising event
    violation: float  # TV distance between the sub-square and square averages


@dataclass
class RegularityReport:
    eps: float
    R: list
    mass: float
    regular: bool
    diameters: dict = field(default_factory=dict)
    witnesses: list = field(default_factory=list)
    exact_pairs: int = 0
    searched_pairs: int = 0

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "regular": self.regular,
            "mass": self.mass,
            "R": [list(p) for p in self.R],
            "witnesses": [
                {"i": w.i, "j": w.j, "U": w.U.tolist(), "T": w.T.tolist(), "omega": w.omega, "violation": w.violation}
                for w in self.witnesses
            ],
            "exact_pairs": self.exact_pairs,
            "searched_pairs": self.searched_pairs,
        }


def _check(m: DiscreteMeasure, v: CoordinatePartition, s: ConfigPartition) -> None:
    if v.n != m.n or s.size != m.support_size:
        raise ValueError("partitions do not match the measure")


def _one_hot(m: DiscreteMeasure) -> np.ndarray:
    return np.eye(m.alphabet.size)[m.configs]  # (S, n, q)


def block_sums(m: DiscreteMeasure, v: CoordinatePartition) -> np.ndarray:
    """``(S, #V, q)`` array of ``sum_{x in V_i} sigma_x(w)``."""
    oh = _one_hot(m)
    return np.stack([oh[:, b, :].sum(axis=1) for b in v.blocks], axis=1)


def index(m: DiscreteMeasure, v: CoordinatePartition, s: ConfigPartition) -> float:
    """Mean within-square variance of the spin indicators, averaged over ``Omega``."""
    _check(m, v, s)
    q, n = m.alphabet.size, m.n
    Y = block_sums(m, v)
    sizes = np.array([b.size for b in v.blocks], dtype=float)
    total = 0.0
    for blk in s.blocks:
        w = m.probs[blk]
        mass = w.sum()
        sub = Y[blk]  # (|S_j|, #V, q)
        mean = np.einsum("s,siw->iw", w, sub) / (mass * sizes[:, None])
        # one-hot entries: sum_x (sigma_x - m)^2 = Y - 2 m Y + |V| m^2
        sq = sub - 2 * mean[None] * sub + sizes[None, :, None] * mean[None] ** 2
        total += float(np.einsum("s,siw->", w, sq))
    return total / (q * n)


# ---------------------------------------------------------------------------
# REG4 witness search


def _best_U(a: np.ndarray, u_min: int) -> tuple[float, np.ndarray]:
    """Largest mean of ``a`` over sets of at least ``u_min`` entries: the top ``u_min``."""
    order = np.argsort(-a, kind="stable")[:u_min]
    return float(a[order].mean()), order


def _reg4_search(
    onehot_blk: np.ndarray,
    w: np.ndarray,
    eps: float,
    budget: int,
    gen: np.random.Generator,
    restarts: int = 16,
):
    """Maximise ``TV(<sigma[.|U]>_T - <sigma[.|V]>_S)`` over admissible ``(U, T)``.

    ``onehot_blk`` is ``(|S_j|, |V_i|, q)``.  Exact (over ``T``; ``U`` is solved
    exactly by sorting) when ``2**|S_j| <= budget``.  Returns
    ``(violation, U, T, A, exact)`` with positions local to the square.
    """
    msz, vsz, q = onehot_blk.shape
    mass = w.sum()
    thr = eps * mass - 1e-15
    u_min = max(1, math.ceil(eps * vsz - 1e-12))
    square = np.einsum("s,sxw->w", w, onehot_blk) / (mass * vsz)
    events = [np.array([(e >> k) & 1 for k in range(q)], dtype=bool) for e in range(1, 2**q - 1)]
    cell = np.stack([onehot_blk[:, :, A].sum(axis=2) for A in events])  # (E, |S|, |V|)
    base = np.array([square[A].sum() for A in events])
    best = (-math.inf, None, None, None)
    exact = (1 << msz) <= budget
    if exact:
        bits = np.arange(msz)
        for start in range(0, 1 << msz, 1 << 14):
            idx = np.arange(max(start, 1), min(start + (1 << 14), 1 << msz), dtype=np.int64)
            if idx.size == 0:
                continue
            masks = ((idx[:, None] >> bits[None, :]) & 1).astype(float)
            tm = masks @ w
            ok = tm >= thr
            if not ok.any():
                continue
            masks, tm, idx = masks[ok], tm[ok], idx[ok]
            for e in range(len(events)):
                a = (masks * w) @ cell[e] / tm[:, None]  # (T count, |V|)
                top = -np.sort(-a, axis=1)[:, :u_min].mean(axis=1) - base[e]
                t = int(np.argmax(top))
                if top[t] > best[0]:
                    T = np.flatnonzero((idx[t] >> bits) & 1)
                    U = np.argsort(-a[t], kind="stable")[:u_min]
                    best = (float(top[t]), U, T, events[e])
    else:
        for e in range(len(events)):
            for r in range(restarts):
                U = np.sort(gen.choice(vsz, size=u_min, replace=False)) if r else None
                val, T = -math.inf, None
                for _ in range(50):
                    if U is None:
                        b = cell[e].mean(axis=1)
                    else:
                        b = cell[e][:, U].mean(axis=1)
                    order = np.argsort(-b, kind="stable")
                    cm = np.cumsum(w[order])
                    stop = int(np.searchsorted(cm, thr)) + 1
                    cur = float((w[order[:stop]] * b[order[:stop]]).sum() / cm[stop - 1])
                    while stop < msz and b[order[stop]] > cur:
                        stop += 1
                        cur = float((w[order[:stop]] * b[order[:stop]]).sum() / cm[stop - 1])
                    T_new = np.sort(order[:stop])
                    a = (w[T_new] @ cell[e][T_new]) / w[T_new].sum()
                    new_val, U_new = _best_U(a, u_min)
                    new_val -= base[e]
                    if new_val <= val + 1e-15:
                        break
                    val, U, T = new_val, np.sort(U_new), T_new
                if T is not None and val > best[0]:
                    best = (val, U, T, events[e])
    val, U, T, A = best
    if T is None:
        return 0.0, None, None, None, exact
    sub = onehot_blk[T][:, U, :]
    avg = np.einsum("s,sxw->w", w[T], sub) / (w[T].sum() * len(U))
    tv = 0.5 * float(np.abs(avg - square).sum())
    return tv, np.sort(U), np.sort(T), A, exact


def block_averages(m: DiscreteMeasure, v: CoordinatePartition) -> np.ndarray:
    """``(S, #V, q)`` array of ``sigma[.|V_i]``."""
    sizes = np.array([b.size for b in v.blocks], dtype=float)
    return block_sums(m, v) / sizes[None, :, None]


def check_regularity(
    m: DiscreteMeasure, v: CoordinatePartition, s: ConfigPartition, eps: float, budget: int = DEFAULT_BUDGET, seed: int = 0
) -> RegularityReport:
    """Largest ``R`` passing REG1, REG3 and the REG4 witness search, plus the witnesses found.

    A pair whose search finds nothing stays in ``R``; above the budget the
    search is a heuristic, so such pairs are only "not refuted".
    """
    _check(m, v, s)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    gen = _rng.stream(seed, "check_regularity")
    oh = _one_hot(m)
    avgs = block_averages(m, v)
    R, diam, wits = [], {}, []
    mass = 0.0
    exact_pairs = searched = 0
    for j, blk in enumerate(s.blocks):
        w = m.probs[blk]
        mu_s = float(w.sum())
        if mu_s <= 0:
            continue
        for i, vb in enumerate(v.blocks):
            a = avgs[blk, i, :]
            d = 0.5 * np.abs(a[:, None, :] - a[None, :, :]).sum(axis=2).max() if len(blk) > 1 else 0.0
            diam[(i, j)] = float(d)
            if d >= eps:
                continue
            searched += 1
            tv, U, T, A, exact = _reg4_search(oh[blk][:, vb, :], w, eps, budget, gen)
            exact_pairs += exact
            if U is not None and tv >= eps:
                sq = np.einsum("s,sxw->w", w, oh[blk][:, vb, :]) / (mu_s * vb.size)
                sub = oh[blk[T]][:, vb[U], :]
                diff = np.einsum("s,sxw->w", w[T], sub) / (w[T].sum() * len(U)) - sq
                wits.append(Witness(i, j, vb[U], blk[T], int(np.argmax(np.abs(diff))), A, tv))
                continue
            R.append((i, j))
            mass += vb.size / m.n * mu_s
    return RegularityReport(eps, R, mass, mass > 1 - eps, diam, wits, exact_pairs, searched)


# ---------------------------------------------------------------------------
# refinement


def q_split(m: DiscreteMeasure, v: CoordinatePartition, s: ConfigPartition, eps: float) -> ConfigPartition:
    """Split every config block by the grid cell (mesh ``eps/|Omega|``) of its members' block averages.

    Members of one new block then differ by less than ``eps`` in total
    variation on every coordinate block.
    """
    q = m.alphabet.size
    mesh = eps / q
    cells = np.floor(block_averages(m, v) / mesh + 1e-9).astype(np.int64).reshape(m.support_size, -1)
    out = []
    for blk in s.blocks:
        groups: dict[bytes, list[int]] = {}
        for r in blk:
            groups.setdefault(cells[r].tobytes(), []).append(int(r))
        out.extend(groups.values())
    return ConfigPartition(out, s.size)


def refine_once(
    m: DiscreteMeasure, v: CoordinatePartition, s: ConfigPartition, report: RegularityReport
) -> tuple[CoordinatePartition, ConfigPartition]:
    """Common refinement by all witnesses, then the grid re-split of config blocks."""
    if not report.witnesses:
        raise ValueError("refine_once needs at least one witness")
    vlab = v.labels()
    vsig = [[int(vlab[x])] for x in range(m.n)]
    slab = s.labels()
    ssig = [[int(slab[r])] for r in range(m.support_size)]
    for w in report.witnesses:
        inU = set(w.U.tolist())
        for x in v.blocks[w.i]:
            vsig[x].append(x in inU)
        inT = set(w.T.tolist())
        for r in s.blocks[w.j]:
            ssig[r].append(r in inT)

    def group(sigs):
        out: dict[tuple, list[int]] = {}
        for k, sig in enumerate(sigs):
            out.setdefault(tuple(sig), []).append(k)
        return list(out.values())

    nv = CoordinatePartition(group(vsig), m.n)
    ns = ConfigPartition(group(ssig), m.support_size)
    return nv, q_split(m, nv, ns, report.eps)


def step_bound(eps: float, q: int) -> int:
    return math.ceil(eps**-5 * q**3)


def regularity_decomposition(
    m: DiscreteMeasure,
    eps: float,
    v0: CoordinatePartition | None = None,
    s0: ConfigPartition | None = None,
    budget: int = DEFAULT_BUDGET,
    seed: int = 0,
    history: list | None = None,
):
    """Refine ``(v0, s0)`` until ``m`` is ``eps``-regular or the step bound is hit.

    Returns ``(v, s, report, steps)``.  If ``history`` is a list, the index
    before and after every refinement is appended to it.
    """
    v = v0 if v0 is not None else CoordinatePartition.trivial(m.n)
    s = s0 if s0 is not None else ConfigPartition.trivial(m)
    _check(m, v, s)
    s = q_split(m, v, s, eps)
    limit = step_bound(eps, m.alphabet.size)
    steps = 0
    while True:
        report = check_regularity(m, v, s, eps, budget, _rng.child_seed(seed, "decomposition", steps))
        if report.regular or not report.witnesses or steps >= limit:
            return v, s, report, steps
        before = index(m, v, s) if history is not None else None
        v, s = refine_once(m, v, s, report)
        steps += 1
        if history is not None:
            history.append((before, index(m, v, s), len(report.witnesses)))


def conditional_measure(m: DiscreteMeasure, v: CoordinatePartition, s: ConfigPartition) -> EmbeddedMeasure:
    """One atom per config block: weight ``mu(S_j)``, step value the square average on each ``V_i``."""
    _check(m, v, s)
    Y = block_sums(m, v)
    sizes = np.array([b.size for b in v.blocks], dtype=float)
    lab = v.labels()
    weights, values = [], []
    for blk in s.blocks:
        w = m.probs[blk]
        mean = np.einsum("s,siw->iw", w, Y[blk]) / (w.sum() * sizes[:, None])
        weights.append(w.sum())
        values.append(mean[lab])
    weights = np.array(weights)
    return EmbeddedMeasure(weights / weights.sum(), np.array(values), m.alphabet)


def natural_coupling(m: DiscreteMeasure, s: ConfigPartition) -> Coupling:
    """Support point ``sigma`` paired with the atom of its config block."""
    mat = np.zeros((m.support_size, len(s)))
    mat[np.arange(m.support_size), s.labels()] = m.probs
    return Coupling(mat)


def reg2metric_distance(m: DiscreteMeasure, v: CoordinatePartition, s: ConfigPartition, seed: int = 0) -> tuple[float, dict]:
    """Upper bound on the strong distance from ``m`` to its conditional measure (natural coupling)."""
    return strong_cut_distance(embed(m), conditional_measure(m, v, s), "heuristic", seed, coupling=natural_coupling(m, s))
