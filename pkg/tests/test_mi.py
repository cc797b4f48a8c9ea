import math

import numpy as np
import pytest

from otdg import diffmath as dm
from otdg import mi


def linear_encoder(w0):
    w = dm.Parameter("w", np.array([[float(w0)]]))
    return lambda node: node @ w


def mige_dw(w0, seed, n=2000, delta=1.0):
    x = np.random.default_rng(1000 + seed).normal(size=(n, 1))
    return mi.mige_gradient(linear_encoder(w0), [x], delta, seed=seed).grads["w"][0, 0]


class TestOracle:
    def test_unit_case(self):
        val, grad = mi.gaussian_mi_oracle(1.0, 1.0)
        assert val == pytest.approx(0.5 * math.log(2))
        assert val == pytest.approx(0.3466, abs=1e-4)
        assert grad == pytest.approx(0.5)

    def test_zero_gain(self):
        assert mi.gaussian_mi_oracle(0.0, 0.7) == (0.0, 0.0)

    def test_decreases_in_noise(self):
        vals = [mi.gaussian_mi_oracle(1.0, d)[0] for d in (0.5, 1, 2, 4, 8, 100)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < 1e-4

    def test_derivative_matches_difference(self):
        w, d, h = 0.7, 0.4, 1e-6
        num = (mi.gaussian_mi_oracle(w + h, d)[0] - mi.gaussian_mi_oracle(w - h, d)[0]) / (2 * h)
        assert mi.gaussian_mi_oracle(w, d)[1] == pytest.approx(num, rel=1e-7)

    def test_bad_delta(self):
        with pytest.raises(mi.MIError):
            mi.gaussian_mi_oracle(1.0, 0.0)


class TestNoise:
    def test_zero_is_identity(self):
        x = np.random.default_rng(0).normal(size=(5, 3))
        out = mi.add_noise(x, 0.0, seed=1)
        np.testing.assert_array_equal(out, x)
        assert out is not x

    def test_variance(self):
        out = mi.add_noise(np.zeros((100_000, 4)), 0.1, seed=2)
        np.testing.assert_allclose(out.var(axis=0), 0.01, rtol=0.02)

    def test_mean_in_clt_band(self):
        x = np.random.default_rng(3).normal(size=(10_000, 2))
        out = mi.add_noise(x, 0.1, seed=4)
        assert np.all(np.abs(out.mean(0) - x.mean(0)) <= 3 * 0.1 / math.sqrt(10_000))

    def test_seeded(self):
        x = np.ones((4, 2))
        np.testing.assert_array_equal(mi.add_noise(x, 0.5, 7), mi.add_noise(x, 0.5, 7))
        assert not np.array_equal(mi.add_noise(x, 0.5, 7), mi.add_noise(x, 0.5, 8))

    def test_negative_delta(self):
        with pytest.raises(mi.MIError):
            mi.add_noise(np.zeros(3), -0.1, 0)


def mae_standard_normal(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    z = np.linspace(-2, 2, 201)
    return float(np.mean(np.abs(mi.ssge_score(x)(z) + z)))


class TestSSGE:
    def test_standard_normal(self):
        # single fits at n=1000 fluctuate, so the error is averaged over seeds
        errs = [mae_standard_normal(1000, s) for s in range(10)]
        assert np.mean(errs) <= 0.15

    def test_shifted_scaled_normal(self):
        m, sd = 1.0, 2.0
        z = np.linspace(m - 2 * sd, m + 2 * sd, 201)
        errs = []
        for s in range(10):
            x = m + sd * np.random.default_rng(s).normal(size=1000)
            errs.append(np.mean(np.abs(mi.ssge_score(x)(z) + (z - m) / sd**2)))
        # the score scales as 1/sd, so the tolerance does too
        assert np.mean(errs) <= 0.15 / sd

    def test_error_shrinks_with_n(self):
        meds = [np.median([mae_standard_normal(n, s) for s in range(10)]) for n in (250, 1000, 4000)]
        assert meds[0] > meds[1] > meds[2]

    def test_affine_change_of_variables(self):
        A = np.array([[1.5, 0.4], [-0.3, 0.8]])
        b = np.array([1.0, -2.0])
        A_inv = np.linalg.inv(A)
        rel = []
        for s in range(5):
            rng = np.random.default_rng(s)
            x = rng.normal(size=(2000, 2))
            probe = 0.7 * rng.normal(size=(200, 2))
            est = mi.ssge_score(x @ A.T + b)(probe @ A.T + b)
            # score of A x + b at A p + b is A^{-T} applied to -p
            true = -probe @ A_inv
            rel.append(np.linalg.norm(est - true, axis=1).mean() / np.linalg.norm(true, axis=1).mean())
        assert np.mean(rel) <= 0.3

    def test_shapes_and_metadata(self):
        x = np.random.default_rng(0).normal(size=(100, 3))
        est = mi.ssge_score(x, num_eigen=4, bandwidth=1.3)
        assert est(x[:7]).shape == (7, 3)
        assert est.num_eigen == 4 and est.bandwidth == 1.3
        assert np.all(np.isfinite(est(x)))

    def test_median_bandwidth(self):
        x = np.array([[0.0], [1.0], [3.0]])
        assert mi.median_bandwidth(x) == 2.0

    def test_eigen_count_checked(self):
        with pytest.raises(mi.MIError):
            mi.ssge_score(np.zeros((5, 1)) + np.arange(5)[:, None], num_eigen=5)

    def test_singular_kernel(self):
        x = np.zeros((30, 2))
        x[0] = 1e-9
        with pytest.raises(mi.MIError, match="jitter"):
            mi.ssge_score(x, num_eigen=6, jitter=0.0)

    def test_lanczos_matches_dense(self):
        x = np.random.default_rng(1).normal(size=(300, 2))
        z = np.random.default_rng(2).normal(size=(20, 2))
        est = mi.ssge_score(x)(z)
        np.testing.assert_allclose(est, mi.ssge_score(x)(z))
        K = np.exp(-((x[:, None] - x[None]) ** 2).sum(-1) / (2 * mi.median_bandwidth(x) ** 2))
        K[np.diag_indices_from(K)] += 1e-6
        dense_vals, _ = np.linalg.eigh(K)
        vals, _ = mi._top_eigen(K, 6)
        np.testing.assert_allclose(np.sort(vals), dense_vals[-6:], rtol=1e-9)


class TestMIGE:
    def test_unit_gain_within_20_percent(self):
        est = np.mean([mige_dw(1.0, s) for s in range(5)])
        oracle = -mi.gaussian_mi_oracle(1.0, 1.0)[1]
        assert abs(est - oracle) <= 0.2 * abs(oracle)

    def test_zero_gain(self):
        for s in range(3):
            assert abs(mige_dw(0.0, s)) <= 0.05

    @pytest.mark.slow
    @pytest.mark.parametrize("w", [0.25, 0.5, 1.0, 2.0])
    def test_sign_agreement(self, w):
        signs = [np.sign(mige_dw(w, s)) == -1 for s in range(20)]
        assert np.mean(signs) >= 0.9

    def test_multi_domain_sums(self):
        w = dm.Parameter("w", np.array([[1.0]]))
        xs = [np.random.default_rng(s).normal(size=(500, 1)) for s in range(2)]
        nodes = [dm.constant(x) @ w for x in xs]
        both = dm.backward(mi.mi_surrogate(nodes, 1.0, seed=3))["w"]
        seeds = np.random.SeedSequence(3).spawn(2)
        parts = [
            dm.backward(mi.mi_surrogate([nodes[i]], 1.0, seed=int(seeds[i].generate_state(1)[0])))
            for i in range(2)
        ]
        assert both.shape == (1, 1)
        assert np.sign(both[0, 0]) == -1
        assert abs(both[0, 0]) > max(abs(p["w"][0, 0]) for p in parts)

    def test_deterministic(self):
        assert mige_dw(1.0, 4, n=300) == mige_dw(1.0, 4, n=300)

    def test_gradient_shapes_match_parameters(self):
        W = dm.Parameter("W", np.random.default_rng(0).normal(size=(3, 2)))
        b = dm.Parameter("b", np.zeros((1, 2)))
        x = np.random.default_rng(1).normal(size=(200, 3))
        g = mi.mige_gradient(lambda n: dm.relu(n @ W + b), [x, x + 1], 0.1, seed=0)
        assert g.grads["W"].shape == (3, 2) and g.grads["b"].shape == (1, 2)

    def test_delta_must_be_positive(self):
        with pytest.raises(mi.MIError):
            mi.mige_gradient(linear_encoder(1.0), [np.zeros((10, 1))], 0.0)
