"""Brute-force reference implementations used only by the tests.

Nothing here calls into the package's enumeration or LP code, so each check
compares two independent routes.
"""

import itertools
import math

import numpy as np
from scipy.optimize import linprog


def brute_table(g):
    """Unnormalized Gibbs weights by looping over every assignment; shape ``(q,)*n``."""
    q = g.q
    out = np.zeros((q,) * g.n)
    for sigma in itertools.product(range(q), repeat=g.n):
        w = 1.0
        for wf, nb in g.constraints:
            psi = g.weights[wf]
            flat = 0
            for y in nb:
                flat = flat * q + sigma[y]
            w *= float(np.asarray(psi.table).ravel()[flat])
        out[sigma] = w
    return out


def brute_marginals(g):
    t = brute_table(g)
    t = t / t.sum()
    return np.array([t.sum(axis=tuple(a for a in range(g.n) if a != x)) for x in range(g.n)])


def brute_log_z(g):
    return math.log(brute_table(g).sum())


def tv(p, q):
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def brute_w1(p, q):
    """Equal-size populations: minimum over all matchings of the mean TV cost."""
    n = len(p)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        best = min(best, sum(tv(p[i], q[perm[i]]) for i in range(n)) / n)
    return best


def _cut_value(mu_vals, nu_vals, pair, U, A):
    i, j = pair
    d = (mu_vals[i] - nu_vals[j])[:, A].sum(axis=1)  # (n,)
    return float(d[U].sum()) / mu_vals.shape[1]


def brute_strong_cut(mu, nu):
    """Min over couplings of max over (U, A, B) by one LP with every constraint written out.

    Each (U, A, B) with B an explicit subset of atom pairs gives a row
    ``t >= sum_{p in B} gamma_p c_p(U, A)``.
    """
    M, N = mu.atoms, nu.atoms
    n, q = mu.n, mu.q
    pairs = [(i, j) for i in range(M) for j in range(N)]
    P = len(pairs)
    rows = []
    for U_bits in range(1 << n):
        U = np.array([(U_bits >> x) & 1 for x in range(n)], dtype=bool)
        for A_bits in range(1, (1 << q) - 1):
            A = np.array([(A_bits >> w) & 1 for w in range(q)], dtype=bool)
            c = np.array([_cut_value(mu.values, nu.values, p, U, A) for p in pairs])
            for B_bits in range(1, 1 << P):
                mask = np.array([(B_bits >> b) & 1 for b in range(P)], dtype=float)
                rows.append(mask * c)
    C = np.array(rows)
    # variables: gamma (P), t
    A_ub = np.hstack([C, -np.ones((len(rows), 1))])
    b_ub = np.zeros(len(rows))
    A_eq, b_eq = [], []
    for i in range(M):
        A_eq.append([1.0 if p[0] == i else 0.0 for p in pairs] + [0.0])
        b_eq.append(mu.weights[i])
    for j in range(N):
        A_eq.append([1.0 if p[1] == j else 0.0 for p in pairs] + [0.0])
        b_eq.append(nu.weights[j])
    cost = np.zeros(P + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=np.array(A_eq), b_eq=np.array(b_eq), bounds=[(0, None)] * (P + 1), method="highs")
    assert res.status == 0
    return float(res.fun)


def brute_cut_sup(gamma, mu, nu):
    """max over U, A and explicit B of ``sum_{p in B} gamma_p c_p(U, A)``."""
    M, N = gamma.shape
    pairs = [(i, j) for i in range(M) for j in range(N) if gamma[i, j] > 0]
    best = 0.0
    for U_bits in range(1 << mu.n):
        U = np.array([(U_bits >> x) & 1 for x in range(mu.n)], dtype=bool)
        for A_bits in range(1, (1 << mu.q) - 1):
            A = np.array([(A_bits >> w) & 1 for w in range(mu.q)], dtype=bool)
            c = [gamma[p] * _cut_value(mu.values, nu.values, p, U, A) for p in pairs]
            for B in itertools.product((0, 1), repeat=len(pairs)):
                best = max(best, sum(ci for ci, b in zip(c, B) if b))
    return best


def brute_index(configs, probs, v_blocks, s_blocks, q):
    """Mean within-block variance of the normalized spin indicator field, by loops."""
    n = configs.shape[1]
    total = 0.0
    for Vi in v_blocks:
        for Sj in s_blocks:
            mass = sum(probs[s] for s in Sj)
            if mass == 0:
                continue
            for w in range(q):
                vals, wts = [], []
                for s in Sj:
                    for x in Vi:
                        vals.append(1.0 if configs[s, x] == w else 0.0)
                        wts.append(probs[s] / n)
                vals, wts = np.array(vals), np.array(wts)
                mean = (vals * wts).sum() / wts.sum()
                total += ((vals - mean) ** 2 * wts).sum()
    return total / q
