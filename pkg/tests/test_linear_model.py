import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivselect.dataset import Dataset
from ivselect.exceptions import DegenerateOutcomeError, InputError, SingularMatrixError
from ivselect.linear_model import (
    CVLasso,
    first_stage_f,
    gaussian_kkt_gap,
    lasso_fit,
    lasso_predict,
    ols_fit,
)
from ivselect.selection import f_threshold

from conftest import make_regression


def proximal_gradient_lasso(x, y, lam, tol=1e-14, max_iter=200_000):
    """Independent ISTA solver for the same standardized objective:
    (1/2n) ||yc - Xs b||^2 + lam ||b||_1 with unpenalized intercept."""
    n = x.shape[0]
    means, sds = x.mean(0), x.std(0)
    sds = np.where(sds > 0, sds, 1.0)
    xs = (x - means) / sds
    yc = y - y.mean()
    step = 1.0 / np.linalg.eigvalsh(xs.T @ xs / n).max()
    beta = np.zeros(x.shape[1])
    for _ in range(max_iter):
        grad = xs.T @ (xs @ beta - yc) / n
        new = beta - step * grad
        new = np.sign(new) * np.maximum(np.abs(new) - step * lam, 0.0)
        if np.max(np.abs(new - beta)) < tol:
            beta = new
            break
        beta = new
    return beta


class TestLassoGaussian:
    def test_zero_response_gives_zero_fit(self, rng):
        x = rng.standard_normal((30, 4))
        fit = lasso_fit(x, np.zeros(30))
        assert fit.intercept == 0.0
        assert np.all(fit.coefficients == 0.0)

    def test_full_shrinkage_at_lambda_max(self, rng):
        x, y = make_regression(rng, n=80, p=5)
        probe = lasso_fit(x, y, lambda_=0.0)
        lam_max = probe.lambda_path[0] if probe.lambda_path.size else 0.0
        # recompute lambda_max directly from the standardized design
        xs = (x - x.mean(0)) / x.std(0)
        lam_max = np.max(np.abs(xs.T @ (y - y.mean()) / len(y)))
        fit = lasso_fit(x, y, lambda_=lam_max * 1.0001)
        assert np.all(fit.coefficients == 0.0)
        assert fit.intercept == pytest.approx(y.mean(), abs=1e-12)

    def test_matches_proximal_gradient_oracle(self, rng):
        # 5x2 system with y = 2 * x1, penalized at a fixed lambda
        x = np.array(
            [[1.0, 0.3], [-0.5, 1.2], [0.7, -0.9], [2.1, 0.4], [-1.3, -0.6]]
        )
        y = 2.0 * x[:, 0]
        lam = 0.1
        fit = lasso_fit(x, y, lambda_=lam)
        oracle = proximal_gradient_lasso(x, y, lam)
        assert fit.coef_std == pytest.approx(oracle, abs=1e-10)

    def test_predict_matches_oracle_fit(self):
        x = np.array(
            [[1.0, 0.3], [-0.5, 1.2], [0.7, -0.9], [2.1, 0.4], [-1.3, -0.6]]
        )
        y = 2.0 * x[:, 0]
        fit = lasso_fit(x, y, lambda_=0.1)
        oracle = proximal_gradient_lasso(x, y, 0.1)
        point = np.array([[1.0, 0.0]])
        means, sds = x.mean(0), x.std(0)
        expected = y.mean() + (point[0] - means) / sds @ oracle
        assert lasso_predict(fit, point)[0] == pytest.approx(expected, abs=1e-10)

    def test_kkt_conditions_hold(self, rng):
        x, y = make_regression(rng, n=150, p=10)
        fit = lasso_fit(x, y, cv_folds=5, seed=3)
        gap = gaussian_kkt_gap(fit, x, y)
        assert np.all(np.abs(gap) <= fit.lambda_ + 1e-6)
        active = fit.coef_std != 0.0
        if active.any():
            eq = gap[active] - fit.lambda_ * np.sign(fit.coef_std[active])
            assert np.max(np.abs(eq)) <= 1e-6

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=15, deadline=None)
    def test_kkt_property_random_problems(self, seed):
        rng = np.random.default_rng(seed)
        n, p = 60, 5
        x = rng.standard_normal((n, p))
        y = x @ rng.uniform(-2, 2, p) + rng.standard_normal(n)
        lam = float(rng.uniform(0.01, 0.5))
        fit = lasso_fit(x, y, lambda_=lam)
        gap = gaussian_kkt_gap(fit, x, y)
        assert np.all(np.abs(gap) <= lam + 1e-6)
        active = fit.coef_std != 0.0
        if active.any():
            eq = gap[active] - lam * np.sign(fit.coef_std[active])
            assert np.max(np.abs(eq)) <= 1e-6

    def test_standardization_roundtrip(self, rng):
        x, y = make_regression(rng, n=90, p=6)
        fit = lasso_fit(x, y, cv_folds=5, seed=1)
        raw = lasso_predict(fit, x)
        xs = (x - fit.column_means) / fit.column_scales
        internal = fit.intercept_std + xs @ fit.coef_std
        assert raw == pytest.approx(internal, abs=1e-10)

    def test_deterministic_given_seed(self, rng):
        x, y = make_regression(rng, n=100, p=7)
        a = lasso_fit(x, y, cv_folds=5, seed=11)
        b = lasso_fit(x, y, cv_folds=5, seed=11)
        assert np.array_equal(a.coefficients, b.coefficients)
        assert a.intercept == b.intercept
        assert a.lambda_ == b.lambda_

    def test_nonfinite_rejected(self, rng):
        x, y = make_regression(rng, n=40, p=3)
        x[3, 1] = np.nan
        with pytest.raises(InputError):
            lasso_fit(x, y)


class TestLassoBinomial:
    def test_single_class_rejected(self, rng):
        x = rng.standard_normal((40, 3))
        with pytest.raises(DegenerateOutcomeError):
            lasso_fit(x, np.ones(40), family="binomial")

    def test_predictions_in_open_unit_interval(self, rng):
        x = rng.standard_normal((300, 4))
        prob = 1.0 / (1.0 + np.exp(-(2.0 * x[:, 0])))
        y = (rng.random(300) < prob).astype(float)
        fit = lasso_fit(x, y, family="binomial", cv_folds=5, seed=2)
        pred = lasso_predict(fit, x)
        assert np.all(pred > 0.0) and np.all(pred < 1.0)

    def test_zero_fit_predicts_half(self):
        x = np.zeros((20, 2))
        pred_logit_zero = 1.0 / (1.0 + np.exp(-0.0))
        assert pred_logit_zero == 0.5
        y = np.array([0.0, 1.0] * 10)
        fit = lasso_fit(x, y, family="binomial", lambda_=1.0)
        # balanced classes with no usable regressors: intercept 0, preds 1/2
        assert np.all(fit.coefficients == 0.0)
        assert lasso_predict(fit, x) == pytest.approx(np.full(20, 0.5), abs=1e-12)

    def test_recovers_strong_signal(self, rng):
        x = rng.standard_normal((2000, 5))
        prob = 1.0 / (1.0 + np.exp(-(1.5 * x[:, 0] - x[:, 1])))
        y = (rng.random(2000) < prob).astype(float)
        fit = lasso_fit(x, y, family="binomial", cv_folds=5, seed=4)
        assert fit.coefficients[0] > 0.5
        assert fit.coefficients[1] < -0.3
        assert abs(fit.coefficients[4]) < 0.2


class TestCVLassoEstimator:
    def test_sklearn_surface(self, rng):
        x, y = make_regression(rng, n=120, p=6)
        est = CVLasso(cv_folds=5, random_state=7)
        params = est.get_params()
        assert params["cv_folds"] == 5
        est.fit(x, y)
        assert est.coef_.shape == (6,)
        assert est.predict(x).shape == (120,)
        clone_params = CVLasso(**params).get_params()
        assert clone_params == params


class TestOls:
    def test_exact_fit_zero_residual_variance(self, rng):
        x = rng.standard_normal((50, 1))
        y = 3.0 * x[:, 0]
        fit = ols_fit(x, y, intercept=True)
        assert fit.coefficients[1] == pytest.approx(3.0, abs=1e-10)
        assert fit.residual_variance == pytest.approx(0.0, abs=1e-20)
        assert fit.fitted + fit.residuals == pytest.approx(y, abs=1e-12)

    def test_orthonormal_design_coefficients(self, rng):
        x = np.linalg.qr(rng.standard_normal((60, 5)))[0]
        y = rng.standard_normal(60)
        fit = ols_fit(x, y, intercept=False)
        assert fit.coefficients == pytest.approx(x.T @ y, abs=1e-12)

    def test_t_statistic_calibration_under_null(self):
        # pure-noise regression: |t| stays below 4 in essentially every rep
        rng = np.random.default_rng(5)
        hits = 0
        reps = 1000
        for _ in range(reps):
            x = rng.standard_normal((10_000, 1))
            y = rng.standard_normal(10_000)
            fit = ols_fit(x, y, intercept=True)
            hits += abs(fit.t_stats[1]) < 4.0
        assert hits >= 0.99 * reps

    def test_singularity_names_offending_column(self, rng):
        x = rng.standard_normal((40, 3))
        x[:, 2] = 2.0 * x[:, 0]
        with pytest.raises(SingularMatrixError) as exc:
            ols_fit(x, rng.standard_normal(40), column_names=["a", "b", "c"])
        assert exc.value.column in ("a", "c")

    def test_constant_column_collides_with_intercept(self, rng):
        x = np.column_stack([rng.standard_normal(40), np.ones(40)])
        with pytest.raises(SingularMatrixError):
            ols_fit(x, rng.standard_normal(40), column_names=["a", "const_col"])


class TestFirstStage:
    def test_constant_candidate_raises(self, rng):
        q = np.column_stack([rng.integers(0, 2, 200).astype(float), np.ones(200)])
        y = rng.standard_normal(200)
        d = rng.integers(0, 2, 200).astype(float)
        data = Dataset(y=y, d=d, q=q)
        with pytest.raises(SingularMatrixError):
            first_stage_f(data, 1)

    def test_null_f_has_unit_mean(self):
        # D independent of Q: F approximately chi-squared(1), mean near 1
        rng = np.random.default_rng(9)
        fs = []
        for _ in range(1000):
            q = (rng.random((500, 8)) < 0.5).astype(float)
            d = (rng.random(500) < 0.5).astype(float)
            data = Dataset(y=rng.standard_normal(500), d=d, q=q)
            fs.append(first_stage_f(data, 3))
        assert abs(np.mean(fs) - 1.0) <= 0.15

    def test_f_grows_linearly_under_alternative(self):
        for seed in range(4):
            rng = np.random.default_rng(seed)
            ratios = []
            n = 2500
            q = rng.standard_normal((2 * n, 4))
            d = (q[:, 1] > 0.0).astype(float)
            y = rng.standard_normal(2 * n)
            small = Dataset(y=y[:n], d=d[:n], q=q[:n])
            big = Dataset(y=y, d=d, q=q)
            ratio = first_stage_f(big, 1) / first_stage_f(small, 1)
            assert 1.5 <= ratio <= 2.5

    def test_paper_design_instrument_exceeds_threshold(self):
        from ivselect.simulation import DgpConfig, generate

        failures = 0
        for seed in range(50):
            config = DgpConfig(n=16000, delta=0.0, gamma=0.0, seed=seed)
            data = generate(config)
            f = first_stage_f(data, config.instrument_index)
            cn = f_threshold(0.1 / np.log(16000))
            failures += f < cn
        assert failures == 0
