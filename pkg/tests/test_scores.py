import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivselect import scores
from ivselect.exceptions import TrimmingError
from ivselect.properties import (
    check_moment_binary,
    check_moment_multi,
    check_orthogonality_binary,
    check_orthogonality_multi,
    check_plain_score_not_orthogonal,
)
from ivselect.scores import (
    draw_zeta,
    multi_scores,
    score_binary,
    score_multi,
    score_quadratic,
)


class TestBinaryScore:
    def test_null_with_perfect_fit_is_zero(self):
        assert score_binary(y=1.5, z=1.0, mu1=1.5, mu0=1.5, p=0.4, theta=0.0) == 0.0

    def test_hand_computed_value(self):
        # squared contrast 1, doubled cross 2*1*(1/0.5)=4, level 1, IPW 2
        value = score_binary(y=3.0, z=1.0, mu1=2.0, mu0=1.0, p=0.5, theta=0.0)
        assert value == pytest.approx(8.0, abs=1e-14)

    def test_linear_in_theta(self):
        for theta in (-2.0, 0.7, 13.0):
            shifted = score_binary(y=3.0, z=1.0, mu1=2.0, mu0=1.0, p=0.5, theta=theta)
            base = score_binary(y=3.0, z=1.0, mu1=2.0, mu0=1.0, p=0.5, theta=0.0)
            assert shifted == base - theta

    def test_quadratic_linear_in_theta(self):
        for theta in (-1.5, 0.25, 4.0):
            assert score_quadratic(2.0, 0.5, theta=theta, zeta=0.3) == (
                score_quadratic(2.0, 0.5, theta=0.0, zeta=0.3) - theta
            )

    def test_trimming_violation_raises(self):
        with pytest.raises(TrimmingError):
            score_binary(y=1.0, z=1.0, mu1=0.0, mu0=0.0, p=0.001, theta=0.0, trim=0.01)


class TestMultiScore:
    def test_constant_mu_equal_to_outcome_gives_zero(self):
        member = np.array([[True, False, False]])
        mu = np.full((1, 3), 2.2)
        value = score_multi(
            np.array([2.2]), member, mu, mu, np.full((1, 3), 1.0 / 3.0), theta=0.0
        )
        assert value == pytest.approx(np.zeros(1), abs=0.0)

    def test_two_bin_hand_evaluation(self):
        # obs in bin 1 of 2; contrasts +1 and -1 so the level terms cancel
        # and the squared terms sum to 2
        y = 2.5
        member = np.array([True, False])
        mu_in = np.array([2.0, 3.0])
        mu_out = np.array([1.0, 4.0])
        p = np.array([0.5, 0.4])
        contrast = mu_in - mu_out
        assert contrast.sum() == 0.0
        assert (contrast**2).sum() == 2.0
        ipw_1 = (y - mu_in[0]) / p[0]            # in own bin: (2.5-2)/0.5 = 1
        ipw_2 = -(y - mu_out[1]) / (1.0 - p[1])  # outside bin 2: 1.5/0.6 = 2.5
        expected = 2.0 + 2.0 * (contrast[0] * ipw_1 + contrast[1] * ipw_2) + 0.0 + (
            ipw_1 + ipw_2
        )
        assert expected == pytest.approx(2.5)
        value = score_multi(y, member, mu_in, mu_out, p, theta=0.0)
        assert value == pytest.approx(expected, abs=1e-14)

    @given(seed=st.integers(0, 100_000), theta=st.floats(-10, 10))
    @settings(max_examples=40, deadline=None)
    def test_reduces_to_binary_at_single_bin(self, seed, theta):
        rng = np.random.default_rng(seed)
        n = 17
        y = rng.standard_normal(n)
        z = rng.integers(0, 2, n).astype(float)
        mu1 = rng.standard_normal(n)
        mu0 = rng.standard_normal(n)
        p = rng.uniform(0.05, 0.95, n)
        multi = multi_scores(
            y,
            (z == 1.0).reshape(-1, 1),
            mu1.reshape(-1, 1),
            mu0.reshape(-1, 1),
            p.reshape(-1, 1),
            theta=theta,
        )
        binary = score_binary(y, z, mu1, mu0, p, theta=theta)
        assert np.array_equal(multi, binary)

    @given(seed=st.integers(0, 100_000), theta=st.floats(-50, 50))
    @settings(max_examples=40, deadline=None)
    def test_linearity_in_theta_exact(self, seed, theta):
        rng = np.random.default_rng(seed)
        n, n_bins = 11, 4
        y = rng.standard_normal(n)
        member = np.eye(n_bins, dtype=bool)[rng.integers(0, n_bins, n)]
        mu_in = rng.standard_normal((n, n_bins))
        mu_out = rng.standard_normal((n, n_bins))
        p = rng.uniform(0.05, 0.95, (n, n_bins))
        base = multi_scores(y, member, mu_in, mu_out, p, theta=0.0)
        shifted = multi_scores(y, member, mu_in, mu_out, p, theta=theta)
        assert np.array_equal(shifted, base - theta)


class TestQuadraticScore:
    def test_zero_cases(self):
        assert score_quadratic(mu=1.0, m=1.0, theta=0.0, zeta=0.0) == 0.0
        assert score_quadratic(mu=3.0, m=1.0, theta=1.0, zeta=0.0) == 3.0

    def test_jitter_mean_vanishes(self):
        rng = np.random.default_rng(99)
        zeta = draw_zeta(100_000, sd=0.1, rng=rng)
        values = score_quadratic(
            mu=np.zeros(100_000), m=np.zeros(100_000), theta=0.0, zeta=zeta
        )
        assert abs(values.mean()) < 0.002


class TestOracleProperties:
    def test_moment_condition_binary(self):
        result = check_moment_binary()
        assert result.passed, result.detail

    def test_moment_condition_multivalued(self):
        result = check_moment_multi()
        assert result.passed, result.detail

    def test_orthogonality_binary(self):
        result = check_orthogonality_binary()
        assert result.passed, result.detail

    def test_orthogonality_multivalued(self):
        result = check_orthogonality_multi()
        assert result.passed, result.detail

    def test_plain_difference_score_is_first_order_sensitive(self):
        result = check_plain_score_not_orthogonal()
        assert result.passed, result.detail

    def test_corrupted_score_fails_orthogonality(self):
        with scores.corrupted_cross_term():
            result = check_orthogonality_binary()
        assert not result.passed
