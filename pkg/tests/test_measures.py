import math

import numpy as np
import pytest
from scipy.stats import norm

from otdg.measures import (
    EmpiricalMeasure,
    GaussianMeasure,
    HistogramMeasure,
    MeasureError,
    gaussian_barycenter,
    kl_divergence,
    l1_distance,
    sample,
    second_moment,
    w2_gaussian,
)


def g1(m, v=1.0):
    return GaussianMeasure([m], [[v]])


class TestTypes:
    def test_uniform_default(self):
        m = EmpiricalMeasure(np.zeros((4, 2)))
        np.testing.assert_allclose(m.weights, 0.25)
        assert m.is_uniform()

    def test_weights_must_sum_to_one(self):
        with pytest.raises(MeasureError):
            EmpiricalMeasure(np.zeros((2, 1)), [0.5, 0.6])

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(MeasureError):
            EmpiricalMeasure(np.zeros((0, 2)))
        with pytest.raises(MeasureError):
            EmpiricalMeasure([[np.nan, 0.0]])

    def test_immutable(self):
        m = EmpiricalMeasure(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            m.points[0, 0] = 1.0

    def test_gaussian_validation(self):
        with pytest.raises(MeasureError):
            GaussianMeasure([0, 0], [[1, 0.5], [0.4, 1]])
        with pytest.raises(MeasureError):
            GaussianMeasure([0, 0], [[1, 0], [0, 0]])

    def test_histogram_simplex(self):
        with pytest.raises(MeasureError):
            HistogramMeasure.on_grid([0.5, 0.6])


class TestSample:
    def test_shape_and_weights(self):
        m = sample(GaussianMeasure.isotropic([0, 0]), 4, seed=7)
        assert m.points.shape == (4, 2)
        np.testing.assert_allclose(m.weights, 0.25)

    def test_law_of_large_numbers(self):
        m = sample(GaussianMeasure.isotropic([3, 0]), 100_000, seed=1)
        assert np.all(np.abs(m.mean() - [3, 0]) < 0.05)

    def test_deterministic(self):
        g = GaussianMeasure.isotropic([0, 0])
        np.testing.assert_array_equal(sample(g, 10, 3).points, sample(g, 10, 3).points)

    def test_second_moment_clt_band(self):
        g = GaussianMeasure([1.0, -2.0], [[2.0, 0.3], [0.3, 0.5]])
        n = 50_000
        pts = sample(g, n, seed=11).points
        sq = np.sum(pts**2, axis=1)
        se = sq.std(ddof=1) / math.sqrt(n)
        assert abs(sq.mean() - second_moment(g)) <= 3 * se


class TestKL:
    def test_identity(self):
        assert kl_divergence(g1(0), g1(0)) == 0.0

    def test_mean_shift(self):
        assert kl_divergence(g1(0), g1(0.5)) == pytest.approx(0.125)

    def test_histogram(self):
        p = HistogramMeasure.on_grid([0.5, 0.5])
        q = HistogramMeasure.on_grid([0.25, 0.75])
        expected = 0.5 * math.log(0.5 / 0.25) + 0.5 * math.log(0.5 / 0.75)
        assert kl_divergence(p, q) == pytest.approx(expected)
        assert kl_divergence(p, q) == pytest.approx(0.1438, abs=1e-4)

    def test_infinite(self):
        p = HistogramMeasure.on_grid([0.5, 0.5])
        q = HistogramMeasure.on_grid([1.0, 0.0])
        assert kl_divergence(p, q) == math.inf

    def test_support_mismatch(self):
        p = HistogramMeasure.on_grid([0.5, 0.5])
        q = HistogramMeasure([[0.0], [2.0]], [0.5, 0.5])
        with pytest.raises(MeasureError):
            kl_divergence(p, q)

    def test_family_mismatch(self):
        with pytest.raises(MeasureError):
            kl_divergence(g1(0), HistogramMeasure.on_grid([1.0]))


class TestL1:
    def test_equal(self):
        assert l1_distance(g1(0.3, 2.0), g1(0.3, 2.0)) == 0.0

    def test_histogram(self):
        p = HistogramMeasure.on_grid([0.5, 0.5])
        q = HistogramMeasure.on_grid([0.25, 0.75])
        assert l1_distance(p, q) == pytest.approx(0.5)

    def test_gaussian_shift(self):
        expected = 2 * (2 * norm.cdf(0.25) - 1)
        assert l1_distance(g1(0), g1(0.5)) == pytest.approx(expected, abs=1e-8)
        assert l1_distance(g1(0), g1(0.5)) == pytest.approx(0.3948, abs=1e-4)

    def test_gaussian_different_variances_symmetric(self):
        a, b = g1(0.2, 0.5), g1(-1.0, 3.0)
        assert l1_distance(a, b) == pytest.approx(l1_distance(b, a), abs=1e-8)
        assert 0 <= l1_distance(a, b) <= 2

    def test_unsupported(self):
        with pytest.raises(MeasureError):
            l1_distance(GaussianMeasure.isotropic([0, 0]), GaussianMeasure.isotropic([1, 0]))


class TestW2:
    def test_identical(self):
        g = GaussianMeasure([1, 2], [[2, 0.5], [0.5, 1]])
        assert w2_gaussian(g, g) == pytest.approx(0.0, abs=1e-7)

    def test_mean_shift(self):
        a = GaussianMeasure.isotropic([0, 0])
        b = GaussianMeasure.isotropic([3, 0])
        assert w2_gaussian(a, b) == pytest.approx(3.0)

    def test_scale(self):
        assert w2_gaussian(g1(0, 1), g1(0, 4)) == pytest.approx(1.0)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(0)

        def rand_g():
            A = rng.normal(size=(2, 2))
            return GaussianMeasure(rng.normal(size=2), A @ A.T + 0.1 * np.eye(2))

        for _ in range(100):
            a, b, c = rand_g(), rand_g(), rand_g()
            assert w2_gaussian(a, c) <= w2_gaussian(a, b) + w2_gaussian(b, c) + 1e-8


class TestSecondMoment:
    def test_gaussian(self):
        assert second_moment(GaussianMeasure.isotropic([0, 0])) == pytest.approx(2.0)

    def test_point_mass(self):
        assert second_moment(EmpiricalMeasure([[3.0, 4.0]])) == pytest.approx(25.0)

    def test_symmetric_pair(self):
        assert second_moment(EmpiricalMeasure([[1.0, 0.0], [0.0, 1.0]])) == pytest.approx(1.0)


def test_pinsker_on_random_histograms():
    rng = np.random.default_rng(5)
    for _ in range(100):
        k = rng.integers(2, 10)
        p = HistogramMeasure.on_grid(rng.dirichlet(np.ones(k)))
        q = HistogramMeasure.on_grid(rng.dirichlet(np.ones(k)))
        assert l1_distance(p, q) ** 2 <= 2 * kl_divergence(p, q) + 1e-12


def test_zero_iff_equal():
    rng = np.random.default_rng(6)
    p = HistogramMeasure.on_grid(rng.dirichlet(np.ones(4)))
    assert l1_distance(p, p) == 0.0 and kl_divergence(p, p) == 0.0
    q = HistogramMeasure.on_grid(p.probs + np.array([1e-6, -1e-6, 0, 0]))
    assert l1_distance(p, q) > 1e-9


def test_gaussian_barycenter_of_isotropic():
    bary = gaussian_barycenter([g1(-2, 0.25), g1(2, 0.25)])
    assert bary.mean[0] == pytest.approx(0.0)
    assert bary.cov[0, 0] == pytest.approx(0.25)
