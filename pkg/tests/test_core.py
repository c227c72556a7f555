import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavitykit.core import (
    BINARY,
    ISING,
    DiscreteMeasure,
    FactorGraph,
    SpinAlphabet,
    StateSpaceTooLarge,
    WeightFunction,
    all_single_marginals,
    conditional_marginal,
    connected_components,
    gibbs_marginal,
    gibbs_measure,
    gibbs_sample,
    gibbs_weight,
    log_partition_function,
    partition_function,
    remove_variable,
)
from cavitykit.models import ising_weight, ksat_weight, preset_ksat, sample_factor_graph

from oracles import brute_log_z, brute_marginals


def edge(beta):
    return FactorGraph(ISING, 2, (ising_weight(beta),), ((0, (0, 1)),))


class TestWeightFunction:
    def test_rejects_nonpositive_entries(self):
        with pytest.raises(ValueError):
            WeightFunction("bad", 2, np.array([1.0, 0.0, 1.0, 1.0]))

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            WeightFunction("bad", 2, np.ones(3))

    def test_call_indexes_row_major(self):
        wf = WeightFunction("t", 2, np.array([1.0, 2.0, 3.0, 4.0]))
        assert wf([1, 0]) == 3.0


class TestGibbsWeight:
    def test_empty_product(self):
        g = FactorGraph(ISING, 3, ())
        assert gibbs_weight(g, [0, 1, 0]) == 1.0

    def test_ising_edge(self):
        assert gibbs_weight(edge(0.5), [1, 1]) == pytest.approx(math.exp(0.5))

    def test_ksat_violated_clause(self):
        # clause with signs (+1,+1,+1) is violated when every spin is -1
        wf = ksat_weight((1, 1, 1), 1.0)
        g = FactorGraph(ISING, 3, (wf,), ((0, (0, 1, 2)),))
        assert gibbs_weight(g, [0, 0, 0]) == pytest.approx(math.exp(-1))
        assert gibbs_weight(g, [0, 1, 0]) == pytest.approx(1.0)


class TestPartitionFunction:
    def test_free_variables(self):
        assert partition_function(FactorGraph(BINARY, 3, ())).z == pytest.approx(8)

    def test_ising_edge_closed_form(self):
        z = partition_function(edge(0.5)).z
        assert z == pytest.approx(2 * math.exp(0.5) + 2 * math.exp(-0.5), rel=1e-14)

    def test_constant_weights(self):
        one = WeightFunction("one", 3, np.ones(8))
        g = FactorGraph(BINARY, 4, (one,), ((0, (0, 1, 3)), (0, (2, 2, 1))))
        assert log_partition_function(g) == pytest.approx(4 * math.log(2))

    def test_cap(self):
        with pytest.raises(StateSpaceTooLarge):
            log_partition_function(FactorGraph(BINARY, 30, ()))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32), n=st.integers(1, 7))
    def test_matches_loop_oracle(self, seed, n):
        g = sample_factor_graph(preset_ksat(3, 1.3, 1.0), n, seed)
        assert log_partition_function(g) == pytest.approx(brute_log_z(g), abs=1e-12)
        np.testing.assert_allclose(all_single_marginals(g), brute_marginals(g), atol=1e-12)


class TestMarginals:
    def test_constant_is_uniform(self):
        g = FactorGraph(BINARY, 3, ())
        np.testing.assert_allclose(gibbs_marginal(g, [0, 2]), np.full((2, 2), 0.25))

    def test_single_endpoint_symmetric(self):
        np.testing.assert_allclose(gibbs_marginal(edge(0.5), [0]), [0.5, 0.5])

    def test_pair(self):
        w = np.array([math.exp(0.5), math.exp(-0.5), math.exp(-0.5), math.exp(0.5)])
        np.testing.assert_allclose(gibbs_marginal(edge(0.5), [0, 1]).ravel(), w / w.sum(), atol=1e-15)

    def test_order_of_vars(self):
        wf = WeightFunction("asym", 2, np.array([1.0, 2.0, 3.0, 4.0]))
        g = FactorGraph(BINARY, 2, (wf,), ((0, (0, 1)),))
        np.testing.assert_allclose(gibbs_marginal(g, [1, 0]), gibbs_marginal(g, [0, 1]).T)


class TestSampling:
    def test_uniform_frequency(self):
        s = gibbs_sample(FactorGraph(BINARY, 1, ()), 10_000, seed=4)
        f = s[:, 0].mean()
        assert abs(f - 0.5) <= 3 * math.sqrt(0.25 / 10_000)

    def test_deterministic(self):
        g = edge(1.0)
        assert np.array_equal(gibbs_sample(g, 50, 9), gibbs_sample(g, 50, 9))

    def test_ising_agreement(self):
        p = math.exp(2) / (math.exp(2) + math.exp(-2))
        s = gibbs_sample(edge(2.0), 10_000, seed=11)
        f = (s[:, 0] == s[:, 1]).mean()
        assert abs(f - p) <= 3 * math.sqrt(p * (1 - p) / 10_000)


class TestConditional:
    def test_no_clamp(self):
        g = sample_factor_graph(preset_ksat(2, 1.0, 1.0), 5, 3)
        np.testing.assert_allclose(conditional_marginal(g, 2, {}), gibbs_marginal(g, [2]), atol=1e-14)

    def test_clamped_neighbour(self):
        p = np.array([math.exp(-0.5), math.exp(0.5)])
        np.testing.assert_allclose(conditional_marginal(edge(0.5), 0, {1: 1}), p / p.sum(), atol=1e-15)

    def test_other_component(self):
        wf = ising_weight(0.7)
        g = FactorGraph(ISING, 4, (wf,), ((0, (0, 1)), (0, (2, 3))))
        np.testing.assert_allclose(conditional_marginal(g, 0, {3: 1}), gibbs_marginal(g, [0]), atol=1e-15)
        assert connected_components(g) == [[0, 1], [2, 3]]


class TestRemoveVariable:
    def test_isolated(self):
        g = FactorGraph(ISING, 3, (ising_weight(1.0),), ((0, (0, 1)),))
        h, ids = remove_variable(g, 2)
        assert h.n == 2 and h.m == 1 and ids == {0: 0, 1: 1}

    def test_edge_endpoint(self):
        h, _ = remove_variable(edge(1.0), 0)
        assert h.n == 1 and h.m == 0

    def test_star(self):
        wf = ising_weight(1.0)
        g = FactorGraph(ISING, 4, (wf,), ((0, (0, 1)), (0, (2, 0)), (0, (0, 3)), (0, (1, 2))))
        h, ids = remove_variable(g, 0)
        assert h.m == 1 and h.constraints[0][1] == (ids[1], ids[2])


class TestSerialization:
    def test_graph_round_trip(self):
        g = sample_factor_graph(preset_ksat(3, 0.8, 1.5), 6, 2)
        h = FactorGraph.from_dict(g.to_dict())
        assert h.constraints == g.constraints and h.n == g.n
        assert log_partition_function(h) == log_partition_function(g)

    def test_missing_field_named(self):
        d = edge(1.0).to_dict()
        del d["constraints"]
        with pytest.raises(ValueError, match="constraints"):
            FactorGraph.from_dict(d)

    def test_measure_round_trip(self):
        m = gibbs_measure(edge(0.3))
        m2 = DiscreteMeasure.from_dict(m.to_dict())
        np.testing.assert_array_equal(m2.configs, m.configs)
        np.testing.assert_allclose(m2.probs, m.probs)

    def test_alphabet(self):
        a = SpinAlphabet(("a", "b", "c"))
        assert a.size == 3 and a.index("c") == 2
