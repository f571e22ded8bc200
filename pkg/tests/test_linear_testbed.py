import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphnorm_lab import linear_testbed as lt
from graphnorm_lab.linear_testbed import (
    closed_form_optimum,
    combined_features,
    generate_dataset,
    gradient_descent,
    rate,
    run_testbed,
    steps_to_reach,
    targets,
    trial_seeds,
)
from graphnorm_lab.norms import shift_matrix


@pytest.fixture(scope="module")
def small():
    return generate_dataset(lt.TestbedConfig(m=400, n=6, seed=42))


class TestGenerator:
    def test_zero_noise_gives_mean(self):
        samples, truth = generate_dataset(lt.TestbedConfig(m=20, n=5, delta1=0.0, seed=42))
        for s in samples:
            np.testing.assert_array_equal(s.XQ, truth.Y)
            np.testing.assert_allclose(s.X @ s.Q, truth.Y, atol=1e-10)

    def test_x_consistent_with_xq(self, small):
        samples, _ = small
        for s in samples[:50]:
            np.testing.assert_allclose(s.X @ s.Q, s.XQ, atol=1e-10)

    def test_noise_covariance(self):
        cfg = lt.TestbedConfig(m=5000, n=4, delta1=0.05, seed=42)
        samples, truth = generate_dataset(cfg)
        e = np.stack([s.XQ - truth.Y for s in samples])
        cov = np.einsum("kij,klj->il", e, e) / len(samples)
        # E = P_v G sqrt(delta1/n) has E E^T expectation delta1 * P_v
        p_v = np.eye(cfg.n) - np.outer(truth.v, truth.v) / (truth.v @ truth.v)
        assert np.linalg.norm(cov - cfg.delta1 * p_v) <= 0.15 * cfg.delta1
        assert np.linalg.eigvalsh(cov).max() <= cfg.delta1 * 1.1

    def test_importance_covariance(self):
        samples, truth = generate_dataset(lt.TestbedConfig(m=5000, n=4, seed=42))
        assert truth.clipped < 100
        p = np.stack([s.p for s in samples])
        assert np.linalg.norm(p.T @ p / len(samples) - np.eye(4)) <= 0.15

    def test_noise_orthogonal_to_shift_direction(self, small):
        samples, truth = small
        n = truth.Y.shape[0]
        shift = shift_matrix(n)
        y_inv = np.linalg.inv(truth.Y)
        for s in samples[:100]:
            e = s.XQ - truth.Y
            assert np.abs(np.ones(n) @ y_inv @ e @ shift).max() <= 1e-9

    def test_boundness(self, small):
        samples, _ = small
        b = lt.TestbedConfig(m=400, n=6).bound
        for s in samples:
            size = np.linalg.norm(s.X, 2) * np.linalg.norm(s.Q, 2) * np.linalg.norm(s.p)
            assert size <= math.sqrt(b) * (1 + 1e-9)

    def test_labels(self, small):
        samples, truth = small
        n = truth.Y.shape[0]
        for s in samples[:20]:
            assert s.y == pytest.approx(truth.w_true @ s.X @ s.Q @ shift_matrix(n) @ s.p, abs=1e-9)
        assert abs(truth.w_true @ truth.v) <= 1e-10

    def test_y_properties(self, small):
        _, truth = small
        assert np.linalg.svd(truth.Y, compute_uv=False).min() >= 0.1
        ones = np.ones(truth.Y.shape[0])
        for g in (truth.Y @ truth.Y.T, truth.Y.T @ truth.Y):
            _, vecs = np.linalg.eigh(g)
            assert np.abs(ones @ vecs).min() >= 1e-3

    def test_deterministic(self):
        a, _ = generate_dataset(lt.TestbedConfig(m=30, seed=3))
        b, _ = generate_dataset(lt.TestbedConfig(m=30, seed=3))
        for s, t in zip(a, b):
            np.testing.assert_array_equal(s.X, t.X)
            assert s.y == t.y

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            lt.TestbedConfig(m=0)
        with pytest.raises(ValueError):
            lt.TestbedConfig(n=1)
        with pytest.raises(ValueError):
            lt.TestbedConfig(delta1=-0.1)

    def test_y_resampling_exhausted(self, monkeypatch):
        monkeypatch.setattr(lt, "MAX_ATTEMPTS", 3)
        with pytest.raises(lt.TestbedError, match="3 attempts"):
            generate_dataset(lt.TestbedConfig(m=5, seed=0, y_scale=1e-3))


class TestSolver:
    def test_identity_features(self):
        y = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(closed_form_optimum(np.eye(3), y), y, atol=1e-12)

    def test_orthonormal_rows_rate_zero(self):
        q, _ = np.linalg.qr(np.random.default_rng(42).standard_normal((5, 5)))
        assert rate(q) == pytest.approx(0.0, abs=1e-12)

    def test_normal_equations(self):
        rng = np.random.default_rng(42)
        z = rng.standard_normal((6, 200))
        y = rng.standard_normal(200)
        w = closed_form_optimum(z, y)
        np.testing.assert_allclose(z @ z.T @ w, z @ y, atol=1e-8)
        np.testing.assert_allclose(w, np.linalg.lstsq(z.T, y, rcond=None)[0], atol=1e-8)

    def test_rank_deficient_min_norm(self):
        rng = np.random.default_rng(42)
        z = rng.standard_normal((3, 50))
        z = np.vstack([z, z[0] + z[1]])
        y = rng.standard_normal(50)
        np.testing.assert_allclose(closed_form_optimum(z, y), np.linalg.pinv(z.T) @ y, atol=1e-8)

    def test_zero_noise_recovers_truth(self):
        samples, truth = generate_dataset(lt.TestbedConfig(m=300, n=5, delta1=0.0, seed=42))
        z = combined_features(samples, shifted=True)
        w = closed_form_optimum(z, targets(samples))
        # rank n-1: the minimum-norm solution lies in the row space, which is v-orthogonal
        np.testing.assert_allclose(w, truth.w_true, atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
    def test_rate_scale_invariant(self, c, seed):
        z = np.random.default_rng(seed).standard_normal((4, 30))
        assert rate(c * z) == pytest.approx(rate(z), abs=1e-10)

    def test_rate_in_unit_interval(self, small):
        samples, _ = small
        for shifted in (False, True):
            assert 0.0 <= rate(combined_features(samples, shifted)) < 1.0

    def test_large_lr_warns(self):
        z = np.random.default_rng(42).standard_normal((3, 20))
        top = np.linalg.eigvalsh(z @ z.T).max()
        with pytest.warns(UserWarning, match="exceeds"):
            gradient_descent(z, np.ones(20), 3, lr=2.5 / top)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            gradient_descent(z, np.ones(20), 3, lr=1.5 / top)


class TestConvergence:
    def test_gd_reaches_optimum(self, small):
        samples, _ = small
        z = combined_features(samples, shifted=True)
        y = targets(samples)
        rho = rate(z)
        w_star = closed_form_optimum(z, y)
        steps = steps_to_reach(rho, np.linalg.norm(w_star), 1e-8, margin=2.0)
        errors, _, _ = gradient_descent(z, y, steps)
        assert errors[-1] <= 1e-8
        assert np.all(np.diff(errors) <= 1e-12 * errors[0])

    def test_bound_holds(self, small):
        samples, _ = small
        y = targets(samples)
        for shifted in (False, True):
            z = combined_features(samples, shifted)
            errors, _, w_star = gradient_descent(z, y, 300)
            t = np.arange(errors.size)
            bound = rate(z) ** t * np.linalg.norm(w_star)
            assert np.all(errors <= bound * (1 + 1e-6) + 1e-12)

    def test_run_testbed(self):
        trace, _ = run_testbed(lt.TestbedConfig(m=300, n=6, seed=42), steps=50)
        assert trace.err_vanilla.size == trace.err_shift.size == 51
        assert trace.bound_ratio() <= 1.0 + 1e-6
        assert trace.lr_vanilla > 0 and trace.lr_shift > 0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_population_spectrum(self, seed):
        samples, _ = generate_dataset(lt.TestbedConfig(m=3000, seed=seed))
        lo_v, hi_v = lt.positive_spectrum(combined_features(samples, False))
        lo_s, hi_s = lt.positive_spectrum(combined_features(samples, True))
        assert lo_s > lo_v and hi_s < hi_v

    def test_steps_to_reach(self):
        assert steps_to_reach(0.5, 1.0, 0.25) == 2
        assert steps_to_reach(0.5, 1.0, 2.0) == 0
        assert steps_to_reach(0.0, 1.0, 1e-3) == 1
        assert steps_to_reach(0.5, 1.0, 0.25, margin=2.0) == 4


def test_trial_seeds():
    a = trial_seeds(0, 20)
    assert a == trial_seeds(0, 20)
    assert len(set(a)) == 20
    assert a[:5] == trial_seeds(0, 5)
    assert all(0 <= s < 2**63 for s in a)
    assert trial_seeds(1, 5) != a[:5]


def test_csv_rows():
    trace, _ = run_testbed(lt.TestbedConfig(m=50, n=4, seed=1), steps=4)
    rows = lt.csv_rows([trace, trace])
    assert len(rows) == 10
    assert rows[5][:2] == (1, 0)
