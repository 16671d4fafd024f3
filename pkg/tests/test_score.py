import numpy as np
import pytest

from memometer import Dataset, ExactMixtureScore, Schedule, ZeroScore, v_of_m
from tests.conftest import make_mixture


def naive_log_density(Y, x, m):
    """Independent direct-sum log density (max-subtracted, no shared code)."""
    v = v_of_m(m)
    mu = np.exp(-m)
    exponents = [-(np.sum((x - mu * y) ** 2)) / (2 * v) for y in Y]
    peak = max(exponents)
    return peak + np.log(sum(np.exp(e - peak) for e in exponents))


def naive_score(Y, x, m):
    """Direct-sum reference score without log-sum-exp weights."""
    v = v_of_m(m)
    mu = np.exp(-m)
    num = np.zeros_like(x)
    den = 0.0
    for y in Y:
        w = np.exp(-(np.sum((x - mu * y) ** 2)) / (2 * v))
        num += w * (mu * y - x) / v
        den += w
    return num / den


class TestExactScore:
    def test_single_sample_closed_form(self):
        y = np.array([0.5, -0.25])  # exactly float32-representable
        _, provider = make_mixture(y[None, :])
        m = 0.8
        x = np.array([1.0, 1.0])
        expected = (y * np.exp(-m) - x) / v_of_m(m)
        got = provider.evaluate(x[None, :], m)[0]
        assert got == pytest.approx(expected, rel=1e-12)

    def test_midpoint_cancellation(self, two_sample_mixture):
        # on the segment's midpoint the pulls from both kernels cancel
        _, provider = two_sample_mixture
        s = provider.evaluate(np.array([[0.0, 0.0]]), 0.5)[0]
        assert s == pytest.approx([0.0, 0.0], abs=1e-14)

    def test_point_symmetric_centroid(self):
        pts = np.array([[1.0, 0.3], [-1.0, -0.3], [0.5, -0.8], [-0.5, 0.8]])
        _, provider = make_mixture(pts)
        s = provider.evaluate(np.zeros((1, 2)), 1.0)[0]
        assert s == pytest.approx([0.0, 0.0], abs=1e-12)

    def test_m_domain(self, two_sample_mixture):
        _, provider = two_sample_mixture
        with pytest.raises(ValueError):
            provider.evaluate(np.zeros((1, 2)), 0.0)
        with pytest.raises(ValueError):
            provider.evaluate(np.zeros((1, 2)), 6.0)  # beyond terminal clock


class TestBatch:
    def test_batch_of_one_matches_scalar(self, ring5_mixture):
        _, provider = ring5_mixture
        x = np.array([0.3, 0.1])
        single = provider.evaluate(x[None, :], 0.7)
        assert single.shape == (1, 2)
        # the scalar path IS the batch path: a 1-D input goes through the
        # identical code as a batch of one
        assert np.array_equal(provider.evaluate(x, 0.7), single)
        # repeated rows inside one call are accumulated identically
        double = provider.evaluate(np.stack([x, x]), 0.7)
        assert np.array_equal(double[0], double[1])
        # across batch shapes BLAS may pick different kernels; agreement
        # stays within a few ulp
        scale = np.abs(single[0]).max()
        assert np.abs(single[0] - double[0]).max() <= 4 * np.spacing(scale)

    def test_against_naive_reference(self):
        rng = np.random.default_rng(7)
        ds, provider = make_mixture(rng.uniform(-1, 1, (5, 2)))
        Y = ds.samples.astype(np.float64)  # stored matrix is float32
        X = rng.uniform(-1.5, 1.5, (20, 2))
        for m in (0.1, 0.5, 2.0):
            got = provider.evaluate(X, m)
            ref = np.stack([naive_score(Y, x, m) for x in X])
            assert np.abs(got - ref).max() < 1e-10

    def test_output_shape_matches(self, ring5_mixture):
        _, provider = ring5_mixture
        X = np.zeros((13, 2))
        assert provider.evaluate(X, 1.0).shape == (13, 2)


class TestGradientCheck:
    @pytest.mark.parametrize("dim", [2, 8])
    def test_score_is_log_density_gradient(self, dim):
        rng = np.random.default_rng(dim)
        h = 1e-5
        for trial in range(10):
            n = rng.integers(2, 11)
            ds, provider = make_mixture(rng.uniform(-1, 1, (n, dim)))
            Y = ds.samples.astype(np.float64)
            x = rng.uniform(-1.2, 1.2, dim)
            m = rng.uniform(0.05, 3.0)
            s = provider.evaluate(x[None, :], m)[0]
            fd = np.empty(dim)
            for j in range(dim):
                e = np.zeros(dim)
                e[j] = h
                fd[j] = (naive_log_density(Y, x + e, m)
                         - naive_log_density(Y, x - e, m)) / (2 * h)
            denom = max(np.abs(s).max(), 1.0)
            assert np.abs(fd - s).max() / denom < 1e-5


class TestProperties:
    def test_weights_probability_vector(self, ring5_mixture):
        _, provider = ring5_mixture
        rng = np.random.default_rng(0)
        X = rng.uniform(-2, 2, (50, 2))
        for m in (0.01, 0.5, 3.0):
            w = provider.mixture_weights(X, m)
            assert np.all(w >= 0)
            assert w.sum(axis=1) == pytest.approx(np.ones(50), abs=1e-12)

    def test_rotation_equivariance(self):
        rng = np.random.default_rng(11)
        Y = rng.uniform(-1, 1, (6, 3))
        theta = 0.7
        Q = np.array(
            [[np.cos(theta), -np.sin(theta), 0],
             [np.sin(theta), np.cos(theta), 0],
             [0, 0, 1.0]]
        )
        p1 = ExactMixtureScore.from_points(Y, Schedule())
        p2 = ExactMixtureScore.from_points(Y @ Q.T, Schedule())
        X = rng.uniform(-1.5, 1.5, (10, 3))
        for m in (0.2, 1.5):
            s1 = p1.evaluate(X, m)
            s2 = p2.evaluate(X @ Q.T, m)
            assert np.abs(s2 - s1 @ Q.T).max() < 1e-10

    def test_small_m_limit_single_sample(self):
        # approaching the data side, the single-kernel pull dominates as 1/v
        y = np.array([0.5, 0.5])
        _, provider = make_mixture(y[None, :])
        x = np.array([0.6, 0.5])
        for m in (1e-3, 1e-5):
            s = provider.evaluate(x[None, :], m)[0]
            expected = (y * np.exp(-m) - x) / v_of_m(m)
            assert s == pytest.approx(expected, rel=1e-10)

    def test_high_dimension_no_underflow(self):
        rng = np.random.default_rng(1)
        Y = rng.uniform(-1, 1, (4, 3072))
        _, provider = make_mixture(Y)
        X = rng.uniform(-1, 1, (3, 3072))
        s = provider.evaluate(X, 0.001)
        assert np.all(np.isfinite(s))


class TestTopK:
    def test_matches_full_sum_when_k_equals_n(self):
        rng = np.random.default_rng(5)
        Y = rng.uniform(-1, 1, (8, 2))
        ds, full = make_mixture(Y)
        truncated = ExactMixtureScore(ds, Schedule(), top_k=8)
        X = rng.uniform(-1, 1, (10, 2))
        assert truncated.evaluate(X, 0.5) == pytest.approx(full.evaluate(X, 0.5), rel=1e-12)

    def test_truncation_close_when_weights_concentrate(self):
        rng = np.random.default_rng(6)
        ang = 2 * np.pi * np.arange(8) / 8
        Y = 1.5 * np.stack([np.cos(ang), np.sin(ang)], axis=1)  # well separated
        ds, full = make_mixture(Y)
        truncated = ExactMixtureScore(ds, Schedule(), top_k=3)
        X = ds.samples.astype(np.float64) + 0.01 * rng.standard_normal(Y.shape)
        m = 0.01  # near centers at small v: weights concentrate on one kernel
        assert np.abs(truncated.evaluate(X, m) - full.evaluate(X, m)).max() < 1e-6

    def test_off_by_default(self):
        ds, provider = make_mixture(np.zeros((3, 2)) + np.eye(3, 2))
        assert provider.top_k is None


class TestZeroScore:
    def test_zero(self):
        provider = ZeroScore()
        X = np.ones((4, 3))
        assert np.array_equal(provider.evaluate(X, 1.0), np.zeros((4, 3)))
