import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qsrmix.errors import CollapsedComponentError, SingularCovarianceError, ZeroDensityError
from qsrmix.gmm import (
    EmConfig,
    GaussianComponent,
    GmmModel,
    em_fit,
    floor_covariance,
    gaussian_pdf,
    gmm_pdf,
    gmm_sample,
    log_likelihood,
    responsibilities,
)

LOG_PEAK = -1.8378770664093453  # ln(1 / 2pi)


def symbolic_pdf(x, mean, cov):
    """Independent 2x2 evaluation: explicit determinant and adjugate inverse."""
    (a, b), (c, d) = cov
    det = a * d - b * c
    dx, dy = x[0] - mean[0], x[1] - mean[1]
    q = (d * dx * dx - (b + c) * dx * dy + a * dy * dy) / det
    return math.exp(-0.5 * q) / (2.0 * math.pi * math.sqrt(det))


def random_spd(rng):
    s = np.exp(rng.uniform(-3, 3, 2))
    rho = rng.uniform(-0.95, 0.95)
    c = rho * s[0] * s[1]
    return np.array([[s[0] ** 2, c], [c, s[1] ** 2]])


def unit(mean=(0.0, 0.0), label=""):
    return GmmModel([1.0], [mean], [np.eye(2)], "diagonal", label)


class TestGaussianPdf:
    def test_peak(self):
        assert gaussian_pdf([0, 0], [0, 0], np.eye(2)) == pytest.approx(0.15915494309189535, rel=1e-15)

    def test_unit_offset(self):
        assert gaussian_pdf([1, 0], [0, 0], np.eye(2)) == pytest.approx(0.09653235263005391, rel=1e-15)

    @pytest.mark.parametrize("cov", [
        [[1.0, 1.0], [1.0, 1.0]],
        [[0.0, 0.0], [0.0, 1.0]],
        [[-1.0, 0.0], [0.0, 1.0]],
        [[1.0, 0.2], [0.3, 1.0]],
    ])
    def test_rejects_bad_covariance(self, cov):
        with pytest.raises(SingularCovarianceError):
            gaussian_pdf([0, 0], [0, 0], cov)

    def test_matches_symbolic(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            cov = random_spd(rng)
            mean = rng.normal(size=2) * 10
            x = mean + rng.normal(size=2) * np.sqrt(np.diag(cov)) * 2
            assert gaussian_pdf(x, mean, cov) == pytest.approx(symbolic_pdf(x, mean, cov), rel=1e-12)


    def test_far_tail_against_exact_rational(self):
        # exp(-q/2) turns rounding in a large quadratic form into relative error
        rng = np.random.default_rng(1)
        for _ in range(200):
            cov = random_spd(rng)
            mean = rng.normal(size=2) * 20
            x = mean + rng.normal(size=2) * np.sqrt(np.diag(cov)) * 2
            (a, b), (c, d) = [[Fraction(v) for v in row] for row in cov]
            dx, dy = Fraction(x[0]) - Fraction(mean[0]), Fraction(x[1]) - Fraction(mean[1])
            det = a * d - b * c
            q = (d * dx * dx - (b + c) * dx * dy + a * dy * dy) / det
            exact = math.exp(-0.5 * float(q)) / (2.0 * math.pi * math.sqrt(float(det)))
            assert gaussian_pdf(x, mean, cov) == pytest.approx(exact, rel=1e-11)


class TestGmmPdf:
    def test_single_component(self):
        cov = np.array([[2.0, 0.3], [0.3, 0.5]])
        m = GmmModel([1.0], [[1.0, 2.0]], [cov], "full")
        x = [0.3, 2.2]
        assert gmm_pdf(m, x) == pytest.approx(gaussian_pdf(x, [1, 2], cov), rel=1e-14)

    def test_identical_components(self):
        cov = np.diag([2.0, 3.0])
        one = GmmModel([1.0], [[1.0, 2.0]], [cov])
        two = GmmModel([0.5, 0.5], [[1.0, 2.0]] * 2, [cov] * 2)
        pts = np.random.default_rng(1).normal(size=(20, 2))
        assert gmm_pdf(two, pts) == pytest.approx(gmm_pdf(one, pts), rel=1e-14)

    def test_integrates_to_one(self):
        m = GmmModel([0.3, 0.7], [[5.0, 90.0], [8.0, 120.0]],
                     [np.diag([1.0, 100.0]), np.diag([2.0, 50.0])])
        g0 = np.linspace(-5, 18, 300)
        g1 = np.linspace(40, 170, 300)
        X, Y = np.meshgrid(g0, g1)
        dens = gmm_pdf(m, np.stack([X, Y], axis=-1))
        total = np.trapezoid(np.trapezoid(dens, g0, axis=1), g1)
        assert total == pytest.approx(1.0, abs=0.02)

    def test_model_validation(self):
        with pytest.raises(ValueError):
            GmmModel([0.5, 0.4], [[0, 0], [1, 1]], [np.eye(2)] * 2)
        with pytest.raises(ValueError):
            GmmModel([1.0], [[0, 0]], [[[1.0, 0.1], [0.1, 1.0]]], "diagonal")
        with pytest.raises(ValueError):
            GmmModel([], np.empty((0, 2)), np.empty((0, 2, 2)))
        with pytest.raises(SingularCovarianceError):
            GmmModel([1.0], [[0, 0]], [[[1.0, 2.0], [2.0, 1.0]]], "full")

    def test_components_round_trip(self):
        m = GmmModel([0.25, 0.75], [[1, 2], [3, 4]], [np.eye(2), 2 * np.eye(2)], "diagonal", "near")
        again = GmmModel.from_components(m.components, "diagonal", "near")
        assert np.array_equal(again.weights, m.weights)
        assert np.array_equal(again.covs, m.covs)
        assert isinstance(m.components[0], GaussianComponent)


class TestLogLikelihood:
    def test_peak(self):
        assert log_likelihood(unit(), [[0.0, 0.0]]) == pytest.approx(LOG_PEAK, rel=1e-15)

    def test_duplicated_data_doubles(self):
        m = GmmModel([0.4, 0.6], [[0, 0], [3, 1]], [np.eye(2), np.diag([2.0, 0.5])])
        x = np.random.default_rng(2).normal(size=(37, 2))
        assert log_likelihood(m, np.vstack([x, x])) == pytest.approx(2 * log_likelihood(m, x), rel=1e-14)

    def test_empty(self):
        with pytest.raises(ValueError):
            log_likelihood(unit(), np.empty((0, 2)))

    def test_far_point_stays_finite(self):
        # log-domain evaluation: exp would underflow here
        assert np.isfinite(log_likelihood(unit(), [[60.0, 0.0]]))

    def test_zero_density_names_point(self):
        m = GmmModel([1.0], [[0.0, 0.0]], [np.eye(2) * 1e-300])
        with pytest.raises(ZeroDensityError) as err:
            log_likelihood(m, [[0.0, 0.0], [1e160, 0.0]])
        assert err.value.index == 1


def _random_problem(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(50, 501))
    k = int(rng.integers(1, 5))
    centers = rng.uniform(-20, 20, (k, 2))
    x = centers[rng.integers(0, k, n)] + rng.normal(size=(n, 2)) * rng.uniform(0.3, 3, 2)
    m = int(rng.integers(1, 5))
    mode = "full" if seed % 2 else "diagonal"
    init = GmmModel(np.full(m, 1.0 / m), x[rng.choice(n, m, replace=False)],
                    [np.diag(x.var(0))] * m, mode)
    return init, x


def assert_monotone(trace, slack=1e-8):
    for a, b in zip(trace, trace[1:]):
        assert b >= a - slack * abs(a), (a, b)


class TestEmFit:
    def test_single_component_one_iteration(self):
        x = np.random.default_rng(3).normal([5, 90], [1, 10], size=(200, 2))
        init = GmmModel([1.0], [[0.0, 0.0]], [np.eye(2)], "full")
        fitted, trace = em_fit(init, x, EmConfig())
        assert fitted.means[0] == pytest.approx(x.mean(0), rel=1e-12)
        cov = np.cov(x.T, ddof=0)
        assert fitted.covs[0] == pytest.approx(cov, rel=1e-10)
        # first step reaches the fixed point; the next one only confirms it
        assert len(trace) == 3
        assert trace[2] == pytest.approx(trace[1], rel=1e-12)

    def test_point_cluster(self):
        x = np.tile([3.0, 45.0], (20, 1))
        fitted, trace = em_fit(unit(), x, EmConfig(variance_floor=1e-6))
        assert np.array_equal(fitted.means[0], [3.0, 45.0])
        assert np.array_equal(np.diag(fitted.covs[0]), [1e-6, 1e-6])

    @pytest.mark.parametrize("seed", range(20))
    def test_monotone(self, seed):
        init, x = _random_problem(seed)
        fitted, trace = em_fit(init, x, EmConfig(max_iterations=200))
        assert_monotone(trace)
        assert fitted.weights.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(fitted.weights >= 0)

    def test_diagonal_mode_stays_diagonal(self):
        init, x = _random_problem(4)
        fitted, _ = em_fit(init, x)
        assert np.all(fitted.covs[:, 0, 1] == 0.0)
        assert np.all(fitted.covs[:, 1, 0] == 0.0)

    def test_recovers_planted_mixture(self):
        rng = np.random.default_rng(5)
        n = 2000
        truth_w = np.array([0.3, 0.7])
        truth_mu = np.array([[0.0, 0.0], [6.0, 6.0]])
        z = rng.random(n) < truth_w[0]
        x = np.where(z[:, None], truth_mu[0], truth_mu[1]) + rng.normal(size=(n, 2))
        init = GmmModel([0.5, 0.5], [[1.0, 1.0], [4.0, 4.0]], [np.eye(2) * 4] * 2)
        fitted, _ = em_fit(init, x)
        best = min(itertools.permutations(range(2)),
                   key=lambda p: np.abs(fitted.means[list(p)] - truth_mu).sum())
        assert fitted.weights[list(best)] == pytest.approx(truth_w, abs=0.05)
        assert fitted.means[list(best)] == pytest.approx(truth_mu, abs=0.1)

    def test_collapse_is_reported(self):
        x = np.random.default_rng(6).normal(size=(100, 2))
        init = GmmModel([0.5, 0.5], [[0.0, 0.0], [1e3, 1e3]], [np.eye(2), np.eye(2)])
        with pytest.raises(CollapsedComponentError) as err:
            em_fit(init, x)
        assert err.value.component == 1

    def test_needs_enough_points(self):
        init = GmmModel([0.5, 0.5], [[0, 0], [1, 1]], [np.eye(2)] * 2)
        with pytest.raises(ValueError):
            em_fit(init, [[0.0, 0.0]])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_weights_normalised_every_step(self, seed):
        init, x = _random_problem(seed)
        for cap in (1, 2, 5):
            fitted, _ = em_fit(init, x, EmConfig(max_iterations=cap))
            assert abs(fitted.weights.sum() - 1.0) <= 1e-9


class TestFloor:
    def test_full_mode_clips_eigenvalues(self):
        cov = np.array([[1.0, 0.999999], [0.999999, 1.0]])
        out = floor_covariance(cov, "full", 1e-3)
        assert np.linalg.eigvalsh(out).min() == pytest.approx(1e-3, rel=1e-9)
        assert np.allclose(out, out.T)

    def test_passthrough_when_above_floor(self):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        assert np.array_equal(floor_covariance(cov, "full", 1e-6), cov)


def test_responsibilities_rows_sum_to_one():
    m = GmmModel([0.2, 0.8], [[0, 0], [2, 2]], [np.eye(2)] * 2)
    r = responsibilities(m, np.random.default_rng(7).normal(size=(30, 2)))
    assert r.sum(1) == pytest.approx(np.ones(30), abs=1e-12)


def test_sampling_moments():
    m = GmmModel([0.3, 0.7], [[0.0, 0.0], [4.0, -2.0]],
                 [np.array([[1.0, 0.4], [0.4, 2.0]]), np.diag([0.5, 0.5])], "full")
    s = gmm_sample(m, 200_000, np.random.default_rng(8))
    mean = m.weights @ m.means
    assert s.mean(0) == pytest.approx(mean, abs=0.02)
