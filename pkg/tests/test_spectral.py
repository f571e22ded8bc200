import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphnorm_lab.graphs import adjacency, make_complete_graph, make_er_graph, make_regular_graph
from graphnorm_lab.norms import q_gcn, q_gin, shift_matrix
from graphnorm_lab.spectral import (
    aggregation_matrix,
    dataset_spectrum_survey,
    interlacing_violation,
    spectrum_report,
    verify_complete_identity,
    verify_regular_zero,
)


def svd_oracle(q):
    """Reference singular values from LAPACK, ascending."""
    lam = np.sort(np.linalg.svd(q, compute_uv=False))
    mu = np.sort(np.linalg.svd(q @ shift_matrix(q.shape[0]), compute_uv=False))
    return lam, mu


class TestReport:
    def test_complete_gin(self):
        rep = spectrum_report(q_gin(adjacency(make_complete_graph(3)), 1.0))
        np.testing.assert_allclose(rep.lam, [4.0, 1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(rep.mu, [1.0, 1.0, 0.0], atol=1e-7)
        assert rep.interlacing_ok and rep.zero_singular_present

    @pytest.mark.parametrize("n", [2, 5, 9])
    def test_identity(self, n):
        rep = spectrum_report(np.eye(n))
        np.testing.assert_allclose(rep.lam, 1.0)
        np.testing.assert_allclose(rep.mu[:-1], 1.0, atol=1e-12)
        assert rep.interlacing_ok and rep.zero_singular_present
        assert rep.equality_cases > 0
        assert rep.cond_q == pytest.approx(1.0) and rep.cond_qn == pytest.approx(1.0)
        assert not rep.strict_improvement

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            spectrum_report(np.ones((2, 3)))
        with pytest.raises(ValueError):
            spectrum_report(np.ones((1, 1)))

    def test_detects_violation(self):
        lam = np.array([1.0, 2.0, 3.0])
        assert interlacing_violation(lam, np.array([1.5, 2.5])) <= 0
        assert interlacing_violation(lam, np.array([0.5, 2.5])) == pytest.approx(0.5)
        assert interlacing_violation(lam, np.array([1.5, 3.5])) == pytest.approx(0.5)

    @pytest.mark.parametrize("arch,xi", [("gcn", 0.0), ("gin", 0.0), ("gin", 1.0)])
    def test_er_graphs_against_lapack(self, arch, xi):
        rng = np.random.default_rng(42)
        for _ in range(50):
            n = int(rng.integers(2, 13))
            q = aggregation_matrix(make_er_graph(n, 0.4, int(rng.integers(2**31))), arch, xi)
            rep = spectrum_report(q)
            lam, mu = svd_oracle(q)
            tol = 1e-8 * lam[-1]
            np.testing.assert_allclose(rep.lam[::-1], lam, atol=tol)
            np.testing.assert_allclose(rep.mu[::-1], mu, atol=1e-6 * lam[-1])
            # the oracle's own chain, built independently
            assert np.all(lam[:-1] <= mu[1:] + tol) and np.all(mu[1:] <= lam[1:] + tol)
            assert rep.interlacing_ok and rep.zero_singular_present
            # interlacing only bounds the positive condition number when Q is
            # nonsingular; a singular Q can trade its zero for a smaller mu
            if lam[0] > tol:
                assert rep.cond_qn <= rep.cond_q * (1 + 1e-9)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 10), st.integers(0, 2**31))
    def test_interlacing_random_matrices(self, n, seed):
        rng = np.random.default_rng(seed)
        rep = spectrum_report(rng.standard_normal((n, n)))
        assert rep.interlacing_ok and rep.zero_singular_present
        assert rep.lam.size == rep.mu.size == n
        assert np.all(np.diff(rep.lam) <= 0) and np.all(rep.mu >= 0)

    def test_aggregation_matrix(self):
        g = make_er_graph(6, 0.5, 3)
        np.testing.assert_array_equal(aggregation_matrix(g, "gcn"), q_gcn(adjacency(g)))
        np.testing.assert_array_equal(aggregation_matrix(g, "gin", 0.3), q_gin(adjacency(g), 0.3))
        with pytest.raises(ValueError):
            aggregation_matrix(g, "gat")


class TestRegularZero:
    def test_documented_case(self):
        assert verify_regular_zero(6, 2, 0.3, seed=42) <= 1e-10

    def test_identity_weight_exact(self):
        assert verify_regular_zero(8, 3, 0.0, w=np.eye(4)) == 0.0

    def test_gcn_variant(self):
        assert verify_regular_zero(8, 3, 0.0, seed=42, arch="gcn") <= 1e-10

    def test_oracle_structure(self):
        # W H0 Q has identical columns, so every row is c_i * 1^T and N removes it
        g = make_regular_graph(10, 4, seed=1)
        q = q_gin(adjacency(g), 0.3)
        h0 = np.zeros((5, 10))
        h0[4] = 1.0
        whq = np.random.default_rng(42).standard_normal((5, 5)) @ h0 @ q
        np.testing.assert_allclose(whq - whq[:, :1], 0.0, atol=1e-12)

    def test_non_regular_is_not_zero(self):
        # a star is not regular, the shift keeps information
        from graphnorm_lab.graphs import Graph, one_hot_degree_features
        from graphnorm_lab.norms import apply_shift_scale
        g = Graph(4, [(0, 1), (0, 2), (0, 3)], np.zeros((0, 4)))
        whq = one_hot_degree_features(g, 3) @ q_gin(adjacency(g), 0.0)
        assert np.linalg.norm(apply_shift_scale(whq, safe=True)) > 1.0


class TestCompleteIdentity:
    def test_documented(self):
        assert verify_complete_identity(3, 0.0) <= 1e-15
        assert verify_complete_identity(5, 1.0) <= 1e-12
        assert verify_complete_identity(12, 0.7) <= 1e-12

    @pytest.mark.parametrize("n", range(2, 13))
    @pytest.mark.parametrize("xi", [0.0, 0.3, 1.0])
    def test_grid(self, n, xi):
        assert verify_complete_identity(n, xi) <= 1e-12


class TestSurvey:
    def test_deterministic_and_ordered(self):
        rng = np.random.default_rng(42)
        graphs = [make_er_graph(int(rng.integers(1, 10)), 0.4, s) for s in range(30)]
        a = dataset_spectrum_survey(graphs, "gin", sample_count=10, seed=5)
        b = dataset_spectrum_survey(graphs, "gin", sample_count=10, seed=5)
        ids = [r.graph_id for r in a]
        assert ids == sorted(ids) and len(ids) == 10
        assert ids == [r.graph_id for r in b]
        assert all(graphs[i].n >= 2 for i in ids)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.mu, y.mu)

    def test_all_graphs(self):
        graphs = [make_complete_graph(n) for n in (1, 2, 5)]
        reps = dataset_spectrum_survey(graphs, "gcn")
        assert [r.graph_id for r in reps] == [1, 2]
        assert all(r.arch == "gcn" for r in reps)
