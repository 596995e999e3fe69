import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_params, random_uncentered
from hyperlatent.model import (
    DegenerateSpectrumWarning,
    ModelParams,
    RankDeficiencyError,
    UncenteredParams,
    constraint_residuals,
    gradient,
    hyperlink_probability,
    identifiability_transform,
    log1pexp,
    log_likelihood,
    penalty,
    penalty_gradient,
    prob,
    sigmoid,
    sigmoid_prime,
    sign_align,
    sign_pattern,
    theta,
)


def _fd(f, x, h=1e-5):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


class TestTheta:
    def test_zero(self):
        p = UncenteredParams(np.zeros(3), np.zeros((2, 2)), np.zeros((3, 2)))
        assert theta(p, 0, 0) == 0.0

    def test_arithmetic(self):
        p = UncenteredParams([-3.0], [[1.0, 0.0]], [[2.0, 0.0]])
        assert theta(p, 0, 0) == -1.0

    def test_matrix_matches_loop(self, rng):
        p = random_params(rng, 5, 4, 2)
        loop = np.array(
            [[p.beta + p.alpha[i] + p.F[j] @ p.Z[i] for i in range(4)] for j in range(5)]
        )
        np.testing.assert_allclose(theta(p), loop, atol=1e-14)

    def test_partial_index_rejected(self, rng):
        with pytest.raises(ValueError):
            theta(random_params(rng, 2, 2, 1), j=0)

    def test_centered_round_trip(self, rng):
        p = random_params(rng, 4, 6, 2)
        back = p.uncentered().centered()
        assert back.beta == pytest.approx(p.beta)
        np.testing.assert_allclose(back.alpha, p.alpha, atol=1e-14)


class TestSigmoid:
    def test_half(self):
        assert sigmoid(0.0) == 0.5

    def test_closed_form(self):
        assert sigmoid(-3.0) == pytest.approx(1 / (1 + math.exp(3)), rel=1e-15)
        assert sigmoid(-3.0) == pytest.approx(0.04742587317756678, rel=1e-12)

    def test_extremes(self):
        # 1 - sigmoid(50) is below float64 resolution, so the upper value is exactly 1.0
        x = np.array([-50.0, 50.0])
        s = sigmoid(x)
        assert np.all(np.isfinite(s))
        assert 0 < s[0] < 1e-20 and 1 - 1e-15 < s[1] <= 1
        np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-12)

    @given(arrays(np.float64, 20, elements=st.floats(-700, 700)))
    def test_symmetry_and_range(self, x):
        np.testing.assert_allclose(sigmoid(x) + sigmoid(-x), 1.0, atol=1e-12)
        assert np.all((sigmoid(x) >= 0) & (sigmoid(x) <= 1))

    def test_derivative_matches_fd(self):
        x = np.linspace(-8, 8, 41)
        np.testing.assert_allclose(sigmoid_prime(x), (sigmoid(x + 1e-6) - sigmoid(x - 1e-6)) / 2e-6, atol=1e-9)

    def test_log1pexp_no_overflow(self):
        assert log1pexp(1000.0) == 1000.0
        assert log1pexp(-1000.0) == 0.0
        assert log1pexp(0.0) == pytest.approx(math.log(2))


class TestHyperlinkProbability:
    def test_fair_coins(self):
        p = UncenteredParams(np.zeros(2), np.zeros((1, 1)), np.zeros((2, 1)))
        assert hyperlink_probability(p, 0, {0}) == pytest.approx(0.25)

    def test_empty_set_is_product(self, rng):
        p = random_params(rng, 3, 5, 2)
        expected = np.prod(1 - prob(p)[1])
        assert hyperlink_probability(p, 1, set()) == pytest.approx(expected, rel=1e-12)

    def test_enumeration_sums_to_one(self, rng):
        p = random_params(rng, 2, 9, 2)
        total = math.fsum(
            hyperlink_probability(p, 0, e) for r in range(10) for e in itertools.combinations(range(9), r)
        )
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_log_form(self, rng):
        p = random_params(rng, 2, 4, 1)
        assert hyperlink_probability(p, 1, {0, 2}, log=True) == pytest.approx(
            math.log(hyperlink_probability(p, 1, {0, 2})), rel=1e-12
        )


class TestLikelihood:
    def test_zero_theta(self, rng):
        m, n = 4, 3
        p = UncenteredParams(np.zeros(n), np.zeros((m, 1)), np.zeros((n, 1)))
        Y = rng.integers(0, 2, (m, n))
        assert log_likelihood(p, Y) == pytest.approx(-m * n * math.log(2))

    def test_fair_pair(self):
        p = UncenteredParams(np.zeros(2), np.zeros((1, 1)), np.zeros((2, 1)))
        assert log_likelihood(p, np.array([[1, 0]])) == pytest.approx(math.log(0.25))

    def test_matches_enumerated_probabilities(self, rng):
        p = random_params(rng, 3, 6, 2)
        Y = rng.integers(0, 2, (3, 6))
        direct = sum(math.log(hyperlink_probability(p, j, set(np.flatnonzero(Y[j])))) for j in range(3))
        assert log_likelihood(p, Y) == pytest.approx(direct, abs=1e-10)

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError):
            log_likelihood(random_params(rng, 3, 4, 1), np.zeros((4, 3)))


class TestGradient:
    def test_all_ones_at_zero(self):
        m, n = 5, 3
        p = UncenteredParams(np.zeros(n), np.zeros((m, 2)), np.zeros((n, 2)))
        g = gradient(p, np.ones((m, n)))
        np.testing.assert_allclose(g.alpha_dagger, m / 2)

    def test_stationary_at_expectation(self, rng):
        p = random_uncentered(rng, 4, 3, 2)
        g = gradient(p, prob(p))
        for part in g:
            np.testing.assert_allclose(part, 0.0, atol=1e-12)

    def test_finite_differences(self, rng):
        p = random_uncentered(rng, 6, 5, 2)
        Y = rng.integers(0, 2, (6, 5))
        g = gradient(p, Y)
        fa = _fd(lambda a: log_likelihood(UncenteredParams(a, p.F, p.Z), Y), p.alpha_dagger)
        fz = _fd(lambda Z: log_likelihood(UncenteredParams(p.alpha_dagger, p.F, Z), Y), p.Z)
        ff = _fd(lambda F: log_likelihood(UncenteredParams(p.alpha_dagger, F, p.Z), Y), p.F)
        np.testing.assert_allclose(g.alpha_dagger, fa, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(g.Z, fz, rtol=1e-6, atol=1e-8)
        np.testing.assert_allclose(g.F, ff, rtol=1e-6, atol=1e-8)


class TestPenalty:
    def _identified(self, rng, m=8, n=6):
        F = rng.standard_normal((m, 2))
        F -= F.mean(axis=0)
        Z = rng.standard_normal((n, 2)) + 0.3
        F, Z, _ = identifiability_transform(F, Z)
        return F, Z

    def test_zero_when_identified(self, rng):
        F, Z = self._identified(rng)
        assert penalty(Z, F, 1.0) < 1e-20

    def test_single_mean_term(self):
        # orthogonal columns with equal Grams and a pure mean offset
        m = n = 4
        base = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
        c = np.array([0.5, 0.0])
        F = base + c  # F'F/m = I + c c', off-diagonal zero since c has one entry
        Z = base * np.sqrt(np.diag(F.T @ F / m))
        lam = 2.0
        assert penalty(Z, F, lam) == pytest.approx(lam * m * n / 2 * c @ c, rel=1e-12)

    def test_gradient_finite_differences(self, rng):
        Z = rng.standard_normal((6, 2))
        F = rng.standard_normal((8, 2)) + 0.2
        gZ, gF = penalty_gradient(Z, F, 0.7)
        np.testing.assert_allclose(gZ, _fd(lambda A: penalty(A, F, 0.7), Z), rtol=1e-6, atol=1e-7)
        np.testing.assert_allclose(gF, _fd(lambda A: penalty(Z, A, 0.7), F), rtol=1e-6, atol=1e-7)

    def test_lambda_must_be_positive(self):
        with pytest.raises(ValueError):
            penalty(np.ones((2, 1)), np.ones((2, 1)), 0.0)


def _independent_spectrum(F, Z):
    """Square roots of eig(Sf Sz) from the general (non-symmetric) solver."""
    Sf = F.T @ F / F.shape[0]
    Sz = Z.T @ Z / Z.shape[0]
    ev = np.linalg.eigvals(Sf @ Sz).real
    return np.sqrt(np.sort(ev)[::-1])


class TestIdentifiabilityTransform:
    def test_fixed_point(self, rng):
        F = rng.standard_normal((30, 2))
        F -= F.mean(axis=0)
        Z = rng.standard_normal((20, 2))
        F1, Z1, _ = identifiability_transform(F, Z)
        F2, Z2, G = identifiability_transform(F1, Z1)
        np.testing.assert_allclose(np.abs(G), np.eye(2), atol=1e-10)
        np.testing.assert_allclose(np.abs(F2), np.abs(F1), atol=1e-10)
        np.testing.assert_allclose(np.abs(Z2), np.abs(Z1), atol=1e-10)

    def test_product_preserved(self, rng):
        for _ in range(20):
            F = rng.standard_normal((12, 3))
            F -= F.mean(axis=0)
            Z = rng.standard_normal((9, 3)) * rng.uniform(0.2, 3, 3)
            F1, Z1, _ = identifiability_transform(F, Z)
            assert np.abs(F1 @ Z1.T - F @ Z.T).max() < 1e-10

    def test_constraints_and_eigen_oracle(self, rng):
        F = rng.standard_normal((50, 2)) @ np.array([[1.0, 0.4], [0.0, 0.6]])
        F -= F.mean(axis=0)
        Z = rng.standard_normal((40, 2)) @ np.array([[0.8, 0.0], [0.5, 1.2]])
        F1, Z1, _ = identifiability_transform(F, Z)
        res = constraint_residuals(F1, Z1)
        assert max(res.values()) < 1e-8
        np.testing.assert_allclose(np.diag(Z1.T @ Z1 / 40), _independent_spectrum(F, Z), rtol=1e-8)

    def test_descending_order(self, rng):
        F = rng.standard_normal((30, 3))
        F -= F.mean(axis=0)
        Z = rng.standard_normal((25, 3))
        _, Z1, _ = identifiability_transform(F, Z)
        d = np.diag(Z1.T @ Z1)
        assert np.all(np.diff(d) < 0)

    def test_rank_deficient(self, rng):
        F = rng.standard_normal((10, 2))
        Z = np.outer(rng.standard_normal(8), [1.0, 2.0])
        with pytest.raises(RankDeficiencyError):
            identifiability_transform(F, Z)

    def test_tied_spectrum_warns(self):
        F = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
        Z = np.sqrt(0.5) * np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]]) * np.sqrt(2)
        with pytest.warns(DegenerateSpectrumWarning):
            identifiability_transform(F, Z)


class TestSign:
    def test_first_vertex_convention(self):
        Z = np.array([[-0.3, 0.2], [1.0, 1.0]])
        np.testing.assert_array_equal(sign_pattern(Z), [-1.0, 1.0])

    def test_idempotent(self, rng):
        p = random_params(rng, 5, 4, 3)
        once = sign_align(p)
        twice = sign_align(once)
        np.testing.assert_array_equal(once.Z, twice.Z)
        np.testing.assert_array_equal(once.F, twice.F)

    def test_recovers_reference_pattern(self, rng):
        Z = rng.standard_normal((30, 3))
        for D in itertools.product([-1.0, 1.0], repeat=3):
            D = np.array(D)
            np.testing.assert_array_equal(sign_pattern(Z, Z * D), D)

    def test_theta_unchanged(self, rng):
        p = random_params(rng, 5, 4, 2)
        np.testing.assert_allclose(sign_align(p).theta(), p.theta(), atol=1e-14)


class TestSerialization:
    def test_round_trip(self, rng):
        p = random_params(rng, 3, 4, 2)
        q = ModelParams.from_dict(p.to_dict())
        np.testing.assert_array_equal(q.theta(), p.theta())
        u = UncenteredParams.from_dict(p.uncentered().to_dict())
        np.testing.assert_array_equal(u.theta(), p.uncentered().theta())

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            ModelParams(0.0, np.zeros(3), np.zeros((2, 2)), np.zeros((4, 2)))
        with pytest.raises(ValueError):
            UncenteredParams([np.nan], np.zeros((1, 1)), np.zeros((1, 1)))
