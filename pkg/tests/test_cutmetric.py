import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2_contingency

from cavitykit.core import BINARY, DiscreteMeasure, SpinAlphabet
from cavitykit.cutmetric import (
    Coupling,
    EmbeddedMeasure,
    constant_measure,
    cut_sup,
    embed,
    embedded_product,
    hamming_cube_instance,
    marginal_distance,
    marginal_product,
    mixture,
    product,
    sample_ah_array,
    sampled_marginal_distance,
    strong_cut_distance,
    two_block_instance,
    weak_cut_distance,
)

from oracles import brute_cut_sup


def random_measure(gen, atoms, n, q=2, discrete=False):
    w = gen.dirichlet(np.ones(atoms))
    if discrete:
        vals = np.eye(q)[gen.integers(0, q, size=(atoms, n))]
    else:
        vals = gen.dirichlet(np.ones(q), size=(atoms, n))
    return EmbeddedMeasure(w, vals)


def dirac(values, q=2):
    return constant_measure(np.eye(q)[list(values)])


class TestEmbed:
    def test_point_mass(self):
        m = DiscreteMeasure(BINARY, np.array([[0, 1, 1]]), np.array([1.0]))
        e = embed(m)
        assert e.atoms == 1 and e.weights[0] == 1.0
        np.testing.assert_array_equal(e.values[0], [[1, 0], [0, 1], [0, 1]])

    def test_uniform_bit(self):
        e = embed(DiscreteMeasure(BINARY, np.array([[0], [1]]), np.array([0.5, 0.5])))
        assert e.atoms == 2 and np.allclose(e.weights, 0.5)

    def test_support_preserved(self):
        gen = np.random.default_rng(2)
        configs = np.unique(gen.integers(0, 2, size=(9, 5)), axis=0)
        m = DiscreteMeasure(BINARY, configs, gen.dirichlet(np.ones(len(configs))))
        assert embed(m).atoms == len(configs)

    def test_serialization(self):
        mu = random_measure(np.random.default_rng(1), 3, 4)
        back = EmbeddedMeasure.from_dict(mu.to_dict())
        np.testing.assert_allclose(back.values, mu.values)


class TestCutSup:
    def test_identical_measures(self):
        mu = random_measure(np.random.default_rng(0), 3, 4)
        assert cut_sup(Coupling.diagonal(mu, mu), mu, mu).value == pytest.approx(0.0, abs=1e-15)

    def test_distinct_point_masses(self):
        mu, nu = dirac([0]), dirac([1])
        assert cut_sup(Coupling(np.ones((1, 1))), mu, nu).value == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_explicit_enumeration(self, seed):
        gen = np.random.default_rng(seed)
        q = 2 + seed % 2
        mu, nu = random_measure(gen, 2, 3, q), random_measure(gen, 3, 3, q)
        gamma = Coupling.independent(mu, nu)
        cut = cut_sup(gamma, mu, nu)
        assert cut.value == pytest.approx(brute_cut_sup(gamma.matrix, mu, nu), abs=1e-12)

    def test_alternating_is_lower_bound(self):
        gen = np.random.default_rng(5)
        for _ in range(10):
            mu, nu = random_measure(gen, 3, 6), random_measure(gen, 2, 6)
            gamma = Coupling.independent(mu, nu)
            assert cut_sup(gamma, mu, nu, "alternating", seed=1).value <= cut_sup(gamma, mu, nu).value + 1e-12

    def test_vertex_attainment(self):
        """Fractional U and B never beat the whole-cell / whole-atom optimum."""
        gen = np.random.default_rng(11)
        for _ in range(20):
            mu, nu = random_measure(gen, 2, 4), random_measure(gen, 2, 4)
            gamma = Coupling.independent(mu, nu).matrix.ravel()
            best = cut_sup(Coupling(gamma.reshape(2, 2)), mu, nu).value
            pairs = list(itertools.product(range(2), range(2)))
            D = np.array([(mu.values[i] - nu.values[j])[:, 0] for i, j in pairs]) / mu.n  # A = {first spin}
            for sign in (1, -1):
                u, b = gen.random(mu.n), gen.random(len(pairs))
                for _ in range(300):
                    c = sign * (D @ u) * gamma
                    b = np.clip(b + 0.5 * c, 0, 1)
                    u = np.clip(u + 0.5 * sign * (D.T @ (b * gamma)), 0, 1)
                assert float((b * gamma * sign * (D @ u)).sum()) <= best + 1e-9


class TestStrongDistance:
    def test_self_distance(self):
        mu = random_measure(np.random.default_rng(3), 3, 4)
        assert strong_cut_distance(mu, mu)[0] == pytest.approx(0.0, abs=1e-9)

    def test_point_masses(self):
        value, cert = strong_cut_distance(dirac([0]), dirac([1]))
        assert value == pytest.approx(1.0) and cert["sup_kind"] == "exact"

    @pytest.mark.parametrize("n", [4, 8, 10])
    def test_hamming_cube_small(self, n):
        mu, nu = hamming_cube_instance(n)
        value, _ = strong_cut_distance(mu, nu)
        assert value <= 2 / math.sqrt(n)

    def test_symmetry_and_triangle(self):
        gen = np.random.default_rng(8)
        for _ in range(50):
            a, b, c = (random_measure(gen, int(gen.integers(1, 4)), 3) for _ in range(3))
            ab, ba = strong_cut_distance(a, b)[0], strong_cut_distance(b, a)[0]
            assert abs(ab - ba) <= 1e-9
            assert strong_cut_distance(a, c)[0] <= ab + strong_cut_distance(b, c)[0] + 1e-9

    def test_heuristic_upper_bound_and_mostly_tight(self):
        gen = np.random.default_rng(21)
        tight = 0
        for i in range(100):
            mu, nu = random_measure(gen, int(gen.integers(1, 4)), 4), random_measure(gen, int(gen.integers(1, 4)), 4)
            exact = strong_cut_distance(mu, nu)[0]
            heur, cert = strong_cut_distance(mu, nu, "heuristic", seed=i)
            assert heur >= exact - 1e-9
            assert cert["lower_bound"] <= exact + 1e-9
            tight += abs(heur - exact) <= 1e-7
        assert tight >= 90

    def test_certificate_coupling_is_valid(self):
        gen = np.random.default_rng(4)
        mu, nu = random_measure(gen, 3, 4), random_measure(gen, 2, 4)
        value, cert = strong_cut_distance(mu, nu)
        cert["coupling"].check(mu, nu)
        assert cut_sup(cert["coupling"], mu, nu).value == pytest.approx(value, abs=1e-9)


class TestWeakDistance:
    def test_permuted_copy(self):
        mu = random_measure(np.random.default_rng(6), 3, 4)
        for mode in ("exact", "heuristic"):
            assert weak_cut_distance(mu, mu.permuted([2, 0, 3, 1]), mode, seed=1)[0] == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("n", [4, 6, 8])
    def test_two_block(self, n):
        mu, nu = two_block_instance(n)
        value, cert = weak_cut_distance(mu, nu, "exact" if n <= 6 else "heuristic", seed=0)
        assert value <= 2 / math.sqrt(n)
        assert len(cert["permutation"]) == n

    def test_weak_below_strong(self):
        gen = np.random.default_rng(9)
        for i in range(100):
            mu, nu = random_measure(gen, int(gen.integers(1, 3)), 3), random_measure(gen, int(gen.integers(1, 3)), 3)
            assert weak_cut_distance(mu, nu)[0] <= strong_cut_distance(mu, nu)[0] + 1e-9


class TestMixtureProduct:
    def test_mixture_with_itself(self):
        mu = random_measure(np.random.default_rng(1), 2, 3)
        assert strong_cut_distance(mixture(mu, mu, 0.3), mu)[0] == pytest.approx(0.0, abs=1e-9)

    def test_product_of_point_masses(self):
        a = DiscreteMeasure(BINARY, np.array([[0, 1]]), np.array([1.0]))
        b = DiscreteMeasure(SpinAlphabet(("x", "y", "z")), np.array([[2, 0]]), np.array([1.0]))
        p = product(a, b)
        assert p.support_size == 1 and p.configs.tolist() == [[2, 3]]

    def test_embed_commutes_with_product(self):
        gen = np.random.default_rng(3)
        a = DiscreteMeasure(BINARY, np.array([[0, 1], [1, 1]]), np.array([0.4, 0.6]))
        b = DiscreteMeasure(BINARY, np.array([[1, 0], [0, 0], [1, 1]]), gen.dirichlet(np.ones(3)))
        lhs, rhs = embed(product(a, b)), embedded_product(embed(a), embed(b))
        np.testing.assert_allclose(lhs.weights, rhs.weights, atol=1e-15)
        np.testing.assert_array_equal(lhs.values, rhs.values)


class TestAldousHoover:
    def test_constant_function(self):
        p = np.array([0.3, 0.7])
        mu = constant_measure(np.tile(p, (5, 1)))
        A = sample_ah_array(mu, 200, 1)
        f = A.mean()
        assert abs(f - 0.7) <= 4 * math.sqrt(0.21 / A.size)

    def test_row_exchangeability(self):
        mu = random_measure(np.random.default_rng(2), 3, 6)
        counts = np.zeros((2, 4))
        for s in range(3000):
            A = sample_ah_array(mu, 3, s)
            counts[0, 2 * A[0, 0] + A[0, 1]] += 1
            counts[1, 2 * A[1, 0] + A[1, 1]] += 1
        assert chi2_contingency(counts)[1] > 0.001

    def test_two_block_limit_pattern(self):
        _, nu = two_block_instance(6)
        hits = 0
        draws = 100_000
        for s in range(draws):
            A = sample_ah_array(nu, 2, s)
            hits += A[0, 0] == 1 and A[0, 1] == 1
        # same row, two independent uniform cells
        expect = float(sum(w * nu.values[a, :, 1].mean() ** 2 for a, w in enumerate(nu.weights)))
        p = hits / draws
        assert abs(p - expect) <= 3 * math.sqrt(expect * (1 - expect) / draws)


class TestSampledMarginals:
    def test_identical(self):
        mu = random_measure(np.random.default_rng(0), 3, 5)
        assert sampled_marginal_distance(mu, mu, 2, 50, 1) == 0.0

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_product_vs_marginal_product(self, k):
        mu, _ = hamming_cube_instance(6)
        assert sampled_marginal_distance(mu, marginal_product(mu), k, 40, 2) == pytest.approx(0.0, abs=1e-12)

    def test_two_block_exhaustive(self):
        mu, _ = two_block_instance(8)
        ref = marginal_product(mu)
        exact = np.mean([marginal_distance(mu, ref, c) for c in itertools.permutations(range(8), 2)])
        est, se = sampled_marginal_distance(mu, ref, 2, 4000, 3, with_se=True)
        # every distinct pair gives the same value here, so se is ~0
        assert abs(est - exact) <= 3 * se + 1e-12
        assert exact == pytest.approx(1 / 18)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32))
    def test_bounded_by_tv(self, seed):
        gen = np.random.default_rng(seed)
        mu, nu = random_measure(gen, 2, 4), random_measure(gen, 3, 4)
        d = sampled_marginal_distance(mu, nu, 2, 10, seed)
        assert 0.0 <= d <= 1.0
