import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphnorm_lab import linalg
from graphnorm_lab.norms import q_gin


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def random_orthogonal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def random_psd(n, rank, rng):
    b = rng.standard_normal((n, rank))
    return b @ b.T


class TestMatmul:
    def test_identity(self):
        m = np.arange(9.0).reshape(3, 3)
        np.testing.assert_array_equal(linalg.matmul(np.eye(3), m), m)

    def test_zero_vector(self):
        out = linalg.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.zeros((2, 1)))
        np.testing.assert_array_equal(out, [[0.0], [0.0]])

    def test_against_triple_loop(self):
        rng = np.random.default_rng(42)
        a = rng.standard_normal((4, 5))
        b = rng.standard_normal((5, 3))
        np.testing.assert_allclose(linalg.matmul(a, b), naive_matmul(a, b), rtol=1e-13, atol=1e-14)

    def test_shape_mismatch_names_both(self):
        with pytest.raises(linalg.LinalgError, match=r"\(2, 3\).*\(4, 2\)"):
            linalg.matmul(np.ones((2, 3)), np.ones((4, 2)))

    def test_construction_rejects_nan(self):
        with pytest.raises(linalg.LinalgError):
            linalg.as_matrix([[np.nan, 1.0]])
        with pytest.raises(linalg.LinalgError):
            linalg.as_matrix([1.0, 2.0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.integers(1, 8), st.integers(0, 2**31))
    def test_associative(self, p, q, r, s, seed):
        rng = np.random.default_rng(seed)
        a, b, c = rng.standard_normal((p, q)), rng.standard_normal((q, r)), rng.standard_normal((r, s))
        left = linalg.matmul(linalg.matmul(a, b), c)
        right = linalg.matmul(a, linalg.matmul(b, c))
        np.testing.assert_allclose(left, right, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(left).max()))


class TestSymEigen:
    def test_diagonal(self):
        vals, _ = linalg.sym_eigen(np.diag([5.0, 2.0, -1.0]))
        np.testing.assert_allclose(vals, [5.0, 2.0, -1.0])

    def test_all_ones(self):
        vals, _ = linalg.sym_eigen(np.ones((3, 3)))
        np.testing.assert_allclose(vals, [3.0, 0.0, 0.0], atol=1e-12)

    def test_reconstruction_6x6(self):
        rng = np.random.default_rng(42)
        b = rng.standard_normal((6, 6))
        m = (b + b.T) / 2
        vals, vecs = linalg.sym_eigen(m)
        assert np.linalg.norm(vecs @ np.diag(vals) @ vecs.T - m) <= 1e-9

    def test_matches_lapack(self):
        rng = np.random.default_rng(7)
        b = rng.standard_normal((9, 9))
        m = b + b.T
        vals, _ = linalg.sym_eigen(m)
        np.testing.assert_allclose(vals, np.linalg.eigvalsh(m)[::-1], atol=1e-10)

    def test_non_square(self):
        with pytest.raises(linalg.LinalgError):
            linalg.sym_eigen(np.ones((2, 3)))

    def test_asymmetric(self):
        with pytest.raises(linalg.LinalgError):
            linalg.sym_eigen(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_non_convergence_carries_residual(self, monkeypatch):
        monkeypatch.setattr(linalg, "MAX_SWEEPS", 0)
        rng = np.random.default_rng(42)
        b = rng.standard_normal((4, 4))
        with pytest.raises(linalg.ConvergenceError) as info:
            linalg.sym_eigen(b + b.T)
        assert info.value.residual > 0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 10), st.integers(0, 2**31))
    def test_orthonormal_and_reconstructs(self, n, seed):
        rng = np.random.default_rng(seed)
        b = rng.standard_normal((n, n))
        m = b + b.T
        vals, vecs = linalg.sym_eigen(m)
        assert np.linalg.norm(vecs @ vecs.T - np.eye(n)) <= 1e-9
        assert np.linalg.norm(vecs @ np.diag(vals) @ vecs.T - m) <= 1e-9 * max(1.0, np.linalg.norm(m))
        assert np.all(np.diff(vals) <= 0)


class TestSingularValues:
    def test_identity(self):
        np.testing.assert_allclose(linalg.singular_values(np.eye(4)), np.ones(4))

    def test_rank_one(self):
        np.testing.assert_allclose(linalg.singular_values(np.ones((3, 3))), [3.0, 0.0, 0.0], atol=1e-12)

    def test_complete_gin(self):
        # A + 2I on K_3 is 11^T + I: eigenvalues 3 + 1 and 1 (twice)
        a = np.ones((3, 3)) - np.eye(3)
        np.testing.assert_allclose(linalg.singular_values(q_gin(a, 1.0)), [4.0, 1.0, 1.0], atol=1e-12)

    def test_against_numpy(self):
        rng = np.random.default_rng(42)
        m = rng.standard_normal((7, 7))
        np.testing.assert_allclose(linalg.singular_values(m), np.linalg.svd(m, compute_uv=False), atol=1e-10)

    def test_non_square(self):
        with pytest.raises(linalg.LinalgError):
            linalg.singular_values(np.ones((2, 3)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31))
    def test_orthogonal_invariance(self, n, seed):
        rng = np.random.default_rng(seed)
        m = rng.standard_normal((n, n))
        u, v = random_orthogonal(n, rng), random_orthogonal(n, rng)
        s = linalg.singular_values(m)
        np.testing.assert_allclose(linalg.singular_values(u @ m @ v), s, atol=1e-9 * max(1.0, s[0]))
        assert np.all(s >= 0) and np.all(np.diff(s) <= 0)


class TestPseudoinverse:
    def test_diagonal(self):
        np.testing.assert_allclose(linalg.pseudoinverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))

    def test_identity(self):
        np.testing.assert_allclose(linalg.pseudoinverse(np.eye(5)), np.eye(5), atol=1e-14)

    def test_penrose_psd_5x5(self):
        rng = np.random.default_rng(42)
        m = random_psd(5, 5, rng)
        p = linalg.pseudoinverse(m)
        assert np.linalg.norm(m @ p @ m - m) <= 1e-9 * np.linalg.norm(m)

    def test_rectangular_matches_numpy(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((4, 6))
        np.testing.assert_allclose(linalg.pseudoinverse(m), np.linalg.pinv(m), atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31), st.data())
    def test_all_four_penrose_identities(self, n, seed, data):
        rank = data.draw(st.integers(1, n))
        rng = np.random.default_rng(seed)
        m = random_psd(n, rank, rng)
        p = linalg.pseudoinverse(m)
        scale = max(1.0, np.linalg.norm(m))
        assert np.linalg.norm(m @ p @ m - m) <= 1e-9 * scale
        assert np.linalg.norm(p @ m @ p - p) <= 1e-9 * max(1.0, np.linalg.norm(p))
        assert np.linalg.norm((m @ p).T - m @ p) <= 1e-9
        assert np.linalg.norm((p @ m).T - p @ m) <= 1e-9


def test_norms():
    m = np.array([[3.0, 0.0], [0.0, -4.0]])
    assert linalg.frobenius(m) == pytest.approx(5.0)
    assert linalg.spectral_norm(m) == pytest.approx(4.0)
