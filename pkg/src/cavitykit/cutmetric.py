"""Step-function embedding of measures on ``Omega**n`` and the strong/weak cut distances.

An :class:`EmbeddedMeasure` is a finite mixture of step functions
``[0,1) -> P(Omega)``, constant on the ``n`` cells ``[(i-1)/n, i/n)``.  Vector
norms over ``Omega`` are total variation (half the l1 norm).

For a coupling ``gamma`` of atom pairs ``p = (sigma, tau)`` the inner supremum
over ``B`` and ``U`` equals ``max_{U, A} sum_p gamma_p (c_p(U, A))^+`` with
``c_p(U, A) = sum_{x in U} (sigma_x(A) - tau_x(A)) / n`` and ``A`` ranging over
subsets of ``Omega``; the optimal ``B`` is the set of pairs with ``c_p > 0``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix, csr_matrix

from . import rng as _rng
from .core import DiscreteMeasure, SpinAlphabet, _field

EXACT_WORK_BUDGET = 1 << 28
BLOCK_SIZE = 16
RESTARTS = 32


@dataclass(eq=False)
class EmbeddedMeasure:
    """Atoms ``(weight, values)`` where ``values[i]`` is the ``(n, q)`` step function of atom ``i``."""

    weights: np.ndarray
    values: np.ndarray
    alphabet: SpinAlphabet | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        v = np.array(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != w.size or w.size == 0:
            raise ValueError("values must have shape (atoms, n, q) matching the weights")
        if np.any(w <= 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("atom weights must be positive and sum to 1")
        if np.any(v < -1e-15) or np.any(np.abs(v.sum(axis=2) - 1) > 1e-12):
            raise ValueError("step function values must be probability vectors")
        self.weights, self.values = w, v

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def q(self) -> int:
        return self.values.shape[2]

    @property
    def atoms(self) -> int:
        return self.weights.size

    def permuted(self, perm) -> "EmbeddedMeasure":
        """``tau o s`` for the coordinate map ``s: x -> perm[x]``."""
        return EmbeddedMeasure(self.weights, self.values[:, list(perm), :], self.alphabet)

    def coordinate_marginals(self) -> np.ndarray:
        """``(n, q)`` array of ``E[sigma_x]``."""
        return np.einsum("a,axq->xq", self.weights, self.values)

    def marginal(self, coords) -> np.ndarray:
        """Law of the spins at ``coords`` (each drawn from its cell's value), shape ``(q,)*k``."""
        v = self.values[:, list(coords), :]
        out = self.weights
        for i in range(v.shape[1]):
            out = out[..., None] * v[(slice(None),) + (None,) * i + (i,)]
        return out.sum(axis=0)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "alphabet": list(self.alphabet.symbols) if self.alphabet else None,
            "atoms": [{"weight": float(w), "stepfn": v.tolist()} for w, v in zip(self.weights, self.values)],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EmbeddedMeasure":
        """Accepts embedded atoms (``stepfn``) or discrete ones (``values``, spin indices)."""
        atoms = _field(data, "atoms")
        alpha = data.get("alphabet")
        alphabet = SpinAlphabet(tuple(alpha)) if alpha else None
        if atoms and "values" in atoms[0]:
            if alphabet is None:
                raise ValueError("missing field 'alphabet'")
            return embed(DiscreteMeasure.from_dict(data))
        return cls([_field(a, "weight") for a in atoms], [_field(a, "stepfn") for a in atoms], alphabet)


@dataclass
class Coupling:
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if np.any(self.matrix < -1e-12):
            raise ValueError("coupling weights must be non-negative")

    def check(self, mu: EmbeddedMeasure, nu: EmbeddedMeasure, tol: float = 1e-10) -> None:
        if self.matrix.shape != (mu.atoms, nu.atoms):
            raise ValueError("coupling shape does not match the atom counts")
        if np.abs(self.matrix.sum(axis=1) - mu.weights).max() > tol or np.abs(self.matrix.sum(axis=0) - nu.weights).max() > tol:
            raise ValueError("coupling marginals do not match")

    @classmethod
    def independent(cls, mu: EmbeddedMeasure, nu: EmbeddedMeasure) -> "Coupling":
        return cls(np.outer(mu.weights, nu.weights))

    @classmethod
    def diagonal(cls, mu: EmbeddedMeasure, nu: EmbeddedMeasure) -> "Coupling":
        """Atom ``i`` of ``mu`` with atom ``i`` of ``nu``; needs equal weight vectors."""
        if mu.atoms != nu.atoms or np.abs(mu.weights - nu.weights).max() > 1e-12:
            raise ValueError("diagonal coupling needs identical weight vectors")
        return cls(np.diag(mu.weights))


@dataclass
class Cut:
    value: float
    U: np.ndarray  # boolean over coordinates
    A: np.ndarray  # boolean over Omega
    B: list = field(default_factory=list)  # atom pairs (i, j)
    exact: bool = True


def embed(m: DiscreteMeasure) -> EmbeddedMeasure:
    """One atom per support point, with point-mass step values."""
    values = np.eye(m.alphabet.size)[m.configs]
    return EmbeddedMeasure(m.probs, values, m.alphabet)


def constant_measure(values, alphabet: SpinAlphabet | None = None) -> EmbeddedMeasure:
    """Dirac measure on one step function given as an ``(n, q)`` array."""
    return EmbeddedMeasure([1.0], np.asarray(values, dtype=float)[None], alphabet)


def empirical_measure(configs: np.ndarray, alphabet: SpinAlphabet) -> EmbeddedMeasure:
    """Uniform weights over sampled configurations (duplicates merged)."""
    rows, counts = np.unique(np.asarray(configs, dtype=np.int64), axis=0, return_counts=True)
    return EmbeddedMeasure(counts / counts.sum(), np.eye(alphabet.size)[rows], alphabet)


def mixture(mu: EmbeddedMeasure, nu: EmbeddedMeasure, alpha: float) -> EmbeddedMeasure:
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if mu.n != nu.n or mu.q != nu.q:
        raise ValueError("mixture needs equal n and alphabet size")
    w = np.concatenate([alpha * mu.weights, (1 - alpha) * nu.weights])
    return EmbeddedMeasure(w / w.sum(), np.concatenate([mu.values, nu.values]), mu.alphabet)


def product(mu: DiscreteMeasure, nu: DiscreteMeasure) -> DiscreteMeasure:
    """``mu (x) nu`` on ``(Omega x Omega')**n``; pair ``(a, b)`` has index ``a * |Omega'| + b``."""
    if mu.n != nu.n:
        raise ValueError("product needs equal n")
    qb = nu.alphabet.size
    alphabet = SpinAlphabet(tuple(itertools.product(mu.alphabet.symbols, nu.alphabet.symbols)))
    configs = (mu.configs[:, None, :] * qb + nu.configs[None, :, :]).reshape(-1, mu.n)
    probs = np.outer(mu.probs, nu.probs).ravel()
    return DiscreteMeasure(alphabet, configs, probs / probs.sum())


def embedded_product(mu: EmbeddedMeasure, nu: EmbeddedMeasure) -> EmbeddedMeasure:
    """Atom-wise product: step value ``sigma_x (x) tau_x`` at every cell."""
    if mu.n != nu.n:
        raise ValueError("product needs equal n")
    values = np.einsum("axq,bxr->abxqr", mu.values, nu.values).reshape(mu.atoms * nu.atoms, mu.n, mu.q * nu.q)
    w = np.outer(mu.weights, nu.weights).ravel()
    return EmbeddedMeasure(w / w.sum(), values)


def marginal_product(mu: EmbeddedMeasure) -> EmbeddedMeasure:
    """Single atom whose step function is the coordinate-wise marginal of ``mu``."""
    return EmbeddedMeasure([1.0], mu.coordinate_marginals()[None], mu.alphabet)


# ---------------------------------------------------------------------------
# inner supremum


def _pair_differences(mu: EmbeddedMeasure, nu: EmbeddedMeasure, pairs: np.ndarray) -> np.ndarray:
    """``(q, P, n)`` array of ``(sigma_x(w) - tau_x(w)) / n`` for each pair."""
    d = mu.values[pairs[:, 0]] - nu.values[pairs[:, 1]]  # (P, n, q)
    return np.transpose(d, (2, 0, 1)) / mu.n


def _subsets(q: int) -> list[np.ndarray]:
    return [np.array([(s >> w) & 1 for w in range(q)], dtype=bool) for s in range(1, 2**q - 1)]


def _support(gamma: np.ndarray, tol: float = 0.0):
    pairs = np.argwhere(gamma > tol)
    return pairs, gamma[pairs[:, 0], pairs[:, 1]]


def _exact_sup_arrays(D: np.ndarray, g: np.ndarray, chunk: int = 1 << 14):
    """Exact ``max_{U, A} sum_p g_p (D_A u)_p^+`` by enumerating every ``U``."""
    q, P, n = D.shape
    best = (-1.0, 0, None)
    cols = np.arange(n)
    for A in _subsets(q):
        DA = D[A].sum(axis=0)  # (P, n)
        for start in range(0, 1 << n, chunk):
            idx = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
            bits = ((idx[:, None] >> cols[None, :]) & 1).astype(float)
            vals = np.maximum(bits @ DA.T, 0.0) @ g
            i = int(np.argmax(vals))
            if vals[i] > best[0]:
                best = (float(vals[i]), int(idx[i]), A)
    value, u, A = best
    U = np.array([(u >> x) & 1 for x in range(n)], dtype=bool)
    return max(value, 0.0), U, A


def _alternating_sup_arrays(D: np.ndarray, g: np.ndarray, restarts: int, gen: np.random.Generator, max_iters: int = 200):
    """Local search over ``(U, A)``: fix one, optimise the other, keep ``B`` implicit.

    Returns the best cut found and the list of all local optima.
    """
    q, P, n = D.shape
    subsets = _subsets(q)
    optima = []
    for r in range(restarts):
        u = np.ones(n, bool) if r == 0 else gen.random(n) < 0.5
        A = None
        value = -1.0
        for _ in range(max_iters):
            if A is None:
                # best A for this U
                cand = [(float(np.maximum(D[S].sum(axis=0) @ u, 0) @ g), i) for i, S in enumerate(subsets)]
                A = subsets[max(cand)[1]]
            c = D[A].sum(axis=0) @ u
            pos = c > 0
            # best U for this (B, A)
            grad = (g[pos, None] * D[A].sum(axis=0)[pos]).sum(axis=0)
            u_new = grad > 0
            # best A for this (B, U)
            v = np.einsum("p,wpx,x->w", g * pos, D, u_new.astype(float))
            A_new = v > 0
            if not A_new.any() or A_new.all():
                A_new = A
            new_value = float(np.maximum(D[A_new].sum(axis=0) @ u_new, 0) @ g)
            if new_value <= value + 1e-15:
                break
            u, A, value = u_new, A_new, new_value
        value = float(np.maximum(D[A].sum(axis=0) @ u, 0) @ g)
        optima.append((value, u.copy(), A.copy()))
    return max(optima, key=lambda t: t[0]), optima


def _block_upper(D: np.ndarray, g: np.ndarray, block: int) -> float:
    """``sum over coordinate blocks of the exact per-block sup``; an upper bound by subadditivity."""
    n = D.shape[2]
    return sum(_exact_sup_arrays(D[:, :, s : s + block], g)[0] for s in range(0, n, block))


def _make_cut(value, U, A, D, pairs, g, exact) -> Cut:
    c = D[A].sum(axis=0) @ U.astype(float)
    B = [tuple(p) for p in pairs[(c > 0) & (g > 0)].tolist()]
    return Cut(float(value), U, A, B, exact)


def cut_sup(
    gamma: Coupling, mu: EmbeddedMeasure, nu: EmbeddedMeasure, mode: str = "exact", seed: int = 0, restarts: int = RESTARTS
) -> Cut:
    """Inner supremum of the strong cut distance for a fixed coupling.

    ``exact`` enumerates every coordinate set ``U`` (``n <= 20``);
    ``alternating`` ascends from random restarts and is a lower bound.
    """
    gamma.check(mu, nu)
    if mu.n != nu.n or mu.q != nu.q:
        raise ValueError("measures must share n and the alphabet size")
    pairs, g = _support(gamma.matrix)
    D = _pair_differences(mu, nu, pairs)
    if mode == "exact":
        if mu.n > 20 or (1 << mu.n) * len(g) > EXACT_WORK_BUDGET:
            raise ValueError(f"exact cut supremum over n={mu.n} coordinates and {len(g)} pairs exceeds the cap")
        value, U, A = _exact_sup_arrays(D, g)
        return _make_cut(value, U, A, D, pairs, g, True)
    if mode == "alternating":
        (value, U, A), _ = _alternating_sup_arrays(D, g, restarts, _rng.stream(seed, "cut_sup"))
        return _make_cut(value, U, A, D, pairs, g, False)
    raise ValueError(f"unknown mode {mode!r}")


# ---------------------------------------------------------------------------
# strong distance


class _CouplingLP:
    """``min t`` over couplings subject to ``t >= sum_p gamma_p c_p^+`` for every stored cut."""

    def __init__(self, mu: EmbeddedMeasure, nu: EmbeddedMeasure):
        self.mu, self.nu = mu, nu
        a, b = mu.atoms, nu.atoms
        self.pairs = np.array([(i, j) for i in range(a) for j in range(b)], dtype=np.int64)
        self.D = _pair_differences(mu, nu, self.pairs)
        P = a * b
        rows = np.concatenate([np.repeat(np.arange(a), b), a + np.tile(np.arange(b), a)])
        cols = np.concatenate([np.arange(P), np.arange(P)])
        self.A_eq = csr_matrix(coo_matrix((np.ones(2 * P), (rows, cols)), shape=(a + b, P + 1)))
        self.b_eq = np.concatenate([mu.weights, nu.weights])
        self.rows: list[np.ndarray] = []
        self.keys: set = set()

    def add(self, U: np.ndarray, A: np.ndarray) -> bool:
        key = (U.tobytes(), A.tobytes())
        if key in self.keys:
            return False
        self.keys.add(key)
        c = self.D[A].sum(axis=0) @ U.astype(float)
        self.rows.append(np.maximum(c, 0.0))
        return True

    def solve(self) -> tuple[np.ndarray, float]:
        P = len(self.pairs)
        cost = np.zeros(P + 1)
        cost[-1] = 1.0
        A_ub = csr_matrix(np.hstack([np.array(self.rows), -np.ones((len(self.rows), 1))]))
        res = linprog(cost, A_ub=A_ub, b_ub=np.zeros(len(self.rows)), A_eq=self.A_eq, b_eq=self.b_eq, bounds=(0, None), method="highs")
        if res.status != 0:
            raise RuntimeError(f"coupling LP failed: {res.message}")
        gamma = np.maximum(res.x[:-1], 0.0).reshape(self.mu.atoms, self.nu.atoms)
        return gamma, float(res.x[-1])


def _seed_cuts(lp: _CouplingLP, n: int, q: int) -> None:
    full = np.ones(n, bool)
    for A in _subsets(q):
        lp.add(full, A)
        for x in range(n):
            lp.add(np.eye(n, dtype=bool)[x], A)


def _final_sup(gamma, mu, nu, seed, restarts):
    """Evaluate the inner sup as tightly as the budget allows; returns ``(cut, kind)``."""
    pairs, g = _support(gamma)
    D = _pair_differences(mu, nu, pairs)
    n, P = mu.n, len(g)
    if n <= 20 and (1 << n) * P <= EXACT_WORK_BUDGET:
        value, U, A = _exact_sup_arrays(D, g)
        return _make_cut(value, U, A, D, pairs, g, True), "exact"
    (value, U, A), _ = _alternating_sup_arrays(D, g, restarts, _rng.stream(seed, "final_sup"))
    cut = _make_cut(value, U, A, D, pairs, g, False)
    blocks = -(-n // BLOCK_SIZE)
    if blocks * (1 << min(n, BLOCK_SIZE)) * P * (2**mu.q - 2) <= EXACT_WORK_BUDGET:
        return cut, "block_upper"
    return cut, "alternating_lower"


def strong_cut_distance(
    mu: EmbeddedMeasure,
    nu: EmbeddedMeasure,
    mode: str = "exact",
    seed: int = 0,
    coupling: Coupling | None = None,
    restarts: int = RESTARTS,
    max_rounds: int = 500,
) -> tuple[float, dict]:
    """Strong cut distance with a certificate.

    ``exact`` runs cutting planes on the coupling LP with an exact separation
    oracle, so the result is optimal.  ``heuristic`` separates with the
    alternating search and then evaluates the final coupling as tightly as the
    budget allows; ``certificate['sup_kind']`` says whether ``value`` is the
    exact sup for that coupling (an upper bound on the distance), a block
    upper bound, or only an alternating lower bound.  Passing ``coupling``
    skips the optimisation over couplings.
    """
    if mu.n != nu.n or mu.q != nu.q:
        raise ValueError("measures must share n and the alphabet size")
    if mode not in ("exact", "heuristic"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "exact" and mu.n > 20:
        raise ValueError(f"exact mode enumerates 2^n coordinate sets; n={mu.n} exceeds the cap of 20")
    lower = 0.0
    rounds = 0
    if coupling is not None:
        coupling.check(mu, nu)
        gamma = coupling.matrix
    elif mu.atoms == 1 or nu.atoms == 1:
        gamma = np.outer(mu.weights, nu.weights)  # the only coupling
    else:
        lp = _CouplingLP(mu, nu)
        _seed_cuts(lp, mu.n, mu.q)
        gen = _rng.stream(seed, "strong_cut_distance")
        while True:
            rounds += 1
            gamma, lower = lp.solve()
            pairs, g = _support(gamma)
            D = _pair_differences(mu, nu, pairs)
            if mode == "exact":
                value, U, A = _exact_sup_arrays(D, g)
                found = [(value, U, A)]
            else:
                (value, U, A), found = _alternating_sup_arrays(D, g, restarts, gen)
            added = False
            for v, U, A in sorted(found, key=lambda t: -t[0]):
                if v > lower + 1e-12:
                    added |= lp.add(U, A)
            if not added or rounds >= max_rounds:
                break
    if mode == "exact":
        pairs, g = _support(gamma)
        D = _pair_differences(mu, nu, pairs)
        value, U, A = _exact_sup_arrays(D, g)
        cut, kind = _make_cut(value, U, A, D, pairs, g, True), "exact"
    else:
        cut, kind = _final_sup(gamma, mu, nu, seed, restarts)
    value = cut.value
    if kind == "block_upper":
        pairs, g = _support(gamma)
        value = _block_upper(_pair_differences(mu, nu, pairs), g, BLOCK_SIZE)
    cert = {
        "mode": mode,
        "coupling": Coupling(gamma),
        "witness": cut,
        "sup_kind": kind,
        "lower_bound": lower if coupling is None and mu.atoms > 1 and nu.atoms > 1 else cut.value,
        "rounds": rounds,
    }
    return float(value), cert


# ---------------------------------------------------------------------------
# weak distance


def weak_cut_distance(mu: EmbeddedMeasure, nu: EmbeddedMeasure, mode: str = "exact", seed: int = 0, max_passes: int = 3) -> tuple[float, dict]:
    """Minimum over coordinate permutations ``s`` of the strong distance to ``nu o s``.

    Only permutations of the ``n`` cells are searched, so the value can exceed
    the infimum over all measure-preserving maps.
    """
    if mu.n != nu.n:
        raise ValueError("weak distance needs equal n")
    n = mu.n
    note = "coordinate permutations only"
    if mode == "exact":
        if n > 8:
            raise ValueError(f"exact weak distance enumerates n! permutations; n={n} exceeds the cap of 8")
        best, best_perm, best_cert = math.inf, None, None
        seen = set()
        for perm in itertools.permutations(range(n)):
            key = nu.values[:, list(perm), :].tobytes()
            if key in seen:
                continue
            seen.add(key)
            value, cert = strong_cut_distance(mu, nu.permuted(perm), "exact", seed)
            if value < best - 1e-15:
                best, best_perm, best_cert = value, perm, cert
        best_cert.update(permutation=list(best_perm), note=note)
        return best, best_cert
    if mode != "heuristic":
        raise ValueError(f"unknown mode {mode!r}")
    ma, mb = mu.coordinate_marginals(), nu.coordinate_marginals()
    cost = 0.5 * np.abs(ma[:, None, :] - mb[None, :, :]).sum(axis=2)
    _, perm = linear_sum_assignment(cost)
    perm = list(perm)
    best, cert = strong_cut_distance(mu, nu.permuted(perm), "heuristic", seed)
    for _ in range(max_passes):
        improved = False
        for i, j in itertools.combinations(range(n), 2):
            cand = perm.copy()
            cand[i], cand[j] = cand[j], cand[i]
            value, c = strong_cut_distance(mu, nu.permuted(cand), "heuristic", seed)
            if value < best - 1e-12:
                best, cert, perm, improved = value, c, cand, True
        if not improved:
            break
    cert.update(permutation=perm, note=note)
    return best, cert


# ---------------------------------------------------------------------------
# sampling


def sample_ah_array(mu: EmbeddedMeasure, k: int, seed: int) -> np.ndarray:
    """``k x k`` array of spin indices: rows are atoms drawn from ``mu``, columns uniform points of ``[0,1)``."""
    if k < 1:
        raise ValueError("k must be at least 1")
    gen = _rng.stream(seed, "aldous_hoover", k)
    rows = gen.choice(mu.atoms, size=k, p=mu.weights)
    cols = gen.integers(0, mu.n, size=k)
    probs = mu.values[rows[:, None], cols[None, :], :]  # (k, k, q)
    u = gen.random((k, k, 1))
    return (u > np.cumsum(probs, axis=2)[..., :-1]).sum(axis=2)


def _coordinate_tuple(gen, n: int, k: int) -> np.ndarray:
    return gen.choice(n, size=k, replace=False)


def marginal_distance(mu: EmbeddedMeasure, nu: EmbeddedMeasure, coords) -> float:
    """TV distance between the joint laws at ``coords``."""
    return 0.5 * float(np.abs(mu.marginal(coords) - nu.marginal(coords)).sum())


def sampled_marginal_distance(
    mu: EmbeddedMeasure, nu: EmbeddedMeasure, k: int, samples: int, seed: int, with_se: bool = False
):
    """Monte Carlo mean of ``||mu_{x_1..x_k} - nu_{x_1..x_k}||_TV`` over distinct uniform coordinates."""
    if mu.n != nu.n:
        raise ValueError("measures must share n")
    if not 1 <= k <= mu.n:
        raise ValueError("need 1 <= k <= n")
    gen = _rng.stream(seed, "sampled_marginal_distance", k)
    vals = np.array([marginal_distance(mu, nu, _coordinate_tuple(gen, mu.n, k)) for _ in range(samples)])
    mean = float(vals.mean())
    if with_se:
        return mean, float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return mean


# ---------------------------------------------------------------------------
# worked instances


def hamming_cube_instance(n: int, samples: int | None = None, seed: int = 0) -> tuple[EmbeddedMeasure, EmbeddedMeasure]:
    """Uniform measure on ``{0,1}**n`` against the Dirac measure on the constant ``Be(1/2)`` function.

    With ``samples`` the cube is replaced by an empirical sample of that size.
    """
    alphabet = SpinAlphabet((0, 1))
    if samples is None:
        if n > 20:
            raise ValueError("the full cube is only built for n <= 20; pass samples")
        configs = (np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1
        mu = EmbeddedMeasure(np.full(1 << n, 2.0**-n), np.eye(2)[configs], alphabet)
    else:
        configs = _rng.stream(seed, "hamming_cube", n).integers(0, 2, size=(samples, n))
        mu = empirical_measure(configs, alphabet)
    return mu, constant_measure(np.full((n, 2), 0.5), alphabet)


def two_block_instance(n: int) -> tuple[EmbeddedMeasure, EmbeddedMeasure]:
    """Even mixture of ``p^(n/2) (x) q^(n/2)`` and its reflection against the two-atom step limit.

    ``p = Be(1/3)``, ``q = Be(2/3)`` on ``{0,1}``; returns ``(mu, nu)`` with ``mu`` exact.
    """
    if n < 2 or n % 2:
        raise ValueError("n must be even and at least 2")
    alphabet = SpinAlphabet((0, 1))
    p, q = np.array([2 / 3, 1 / 3]), np.array([1 / 3, 2 / 3])
    h = n // 2
    first = np.vstack([np.tile(p, (h, 1)), np.tile(q, (h, 1))])
    second = first[::-1].copy()
    configs = (np.arange(1 << n)[:, None] >> np.arange(n - 1, -1, -1)[None, :]) & 1

    def law(step):
        probs = step[np.arange(n)[None, :], configs]
        return probs.prod(axis=1)

    w = 0.5 * law(first) + 0.5 * law(second)
    mu = EmbeddedMeasure(w / w.sum(), np.eye(2)[configs], alphabet)
    nu = EmbeddedMeasure([0.5, 0.5], np.stack([first, second]), alphabet)
    return mu, nu
