"""Penalized and classical regression primitives.

The lasso follows the glmnet recipe: columns standardized to mean zero and
unit variance (1/n), unpenalized intercept, cyclic coordinate descent with
warm starts along a descending 100-point log-spaced lambda path, and
10-fold cross-validation picking the lambda with minimum mean deviance.
Binomial fits wrap coordinate descent in iteratively reweighted least
squares. OLS carries classical (homoskedasticity-based) standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator

from . import _solver
from .dataset import Dataset
from .exceptions import DegenerateOutcomeError, InputError, SingularMatrixError
from .validation import check_matrix, check_seed, check_vector

N_LAMBDA = 100
LAMBDA_MIN_RATIO = 1e-3
CD_TOL = 1e-7
MAX_OUTER = 100
CV_FOLDS = 10
OLS_RCOND = 1e-12


@dataclass
class LassoFit:
    """Fitted penalized regression, on the raw (unstandardized) scale.

    ``coef_std`` and ``intercept_std`` hold the solution of the standardized
    objective, which is the scale on which ``lambda_`` and the KKT conditions
    are defined.
    """

    family: str
    intercept: float
    coefficients: np.ndarray
    lambda_: float
    lambda_path: np.ndarray
    cv_folds: int
    cv_deviance: np.ndarray | None
    column_means: np.ndarray
    column_scales: np.ndarray
    coef_std: np.ndarray
    intercept_std: float

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[0]


@dataclass
class OlsFit:
    """Classical least-squares fit with t statistics."""

    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_stats: np.ndarray
    residual_variance: float
    names: list[str] = field(default_factory=list)
    n: int = 0
    fitted: np.ndarray | None = None
    residuals: np.ndarray | None = None
    xtx_inv: np.ndarray | None = None


def _standardize(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    means = x.mean(axis=0)
    sds = x.std(axis=0)
    scales = np.where(sds > 0.0, sds, 1.0)
    return (x - means) / scales, means, scales


def _lambda_grid(lam_max: float, n_lambda: int, min_ratio: float) -> np.ndarray:
    return lam_max * np.exp(
        np.linspace(0.0, np.log(min_ratio), n_lambda)
    )


def _fold_assignment(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    assign = np.empty(n, dtype=np.int64)
    assign[rng.permutation(n)] = np.arange(n) % k
    return assign


def _intercept_only(family: str, y: np.ndarray, p: int) -> LassoFit:
    if family == "gaussian":
        mu = float(y.mean())
    else:
        ybar = float(y.mean())
        mu = float(np.log(ybar / (1.0 - ybar))) if 0.0 < ybar < 1.0 else 0.0
    return LassoFit(
        family=family,
        intercept=mu,
        coefficients=np.zeros(p),
        lambda_=0.0,
        lambda_path=np.array([0.0]),
        cv_folds=0,
        cv_deviance=None,
        column_means=np.zeros(p),
        column_scales=np.ones(p),
        coef_std=np.zeros(p),
        intercept_std=mu,
    )


def _fit_path(
    x: np.ndarray, y: np.ndarray, family: str, lambdas: np.ndarray, tol: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Fit the whole path; returns (intercepts_std, betas_std, means, scales)."""
    xs, means, scales = _standardize(x)
    xs = np.ascontiguousarray(xs)
    n = xs.shape[0]
    if family == "gaussian":
        ybar = y.mean()
        gram = xs.T @ xs / n
        q = xs.T @ (y - ybar) / n
        betas = _solver.gaussian_path(gram, q, lambdas, tol)
        b0s = np.full(lambdas.shape[0], ybar)
    else:
        xs_t = np.ascontiguousarray(xs.T)
        b0s, betas = _solver.binomial_path(xs, xs_t, y, lambdas, tol, MAX_OUTER)
    return b0s, betas, means, scales


def _predict_std(
    x: np.ndarray,
    b0: float,
    beta: np.ndarray,
    means: np.ndarray,
    scales: np.ndarray,
    family: str,
) -> np.ndarray:
    eta = b0 + (x - means) / scales @ beta
    if family == "gaussian":
        return eta
    return np.clip(1.0 / (1.0 + np.exp(-eta)), 1e-12, 1.0 - 1e-12)


def _deviance(family: str, y: np.ndarray, mu: np.ndarray) -> np.ndarray:
    if family == "gaussian":
        return (y[:, None] - mu) ** 2
    mu = np.clip(mu, 1e-10, 1.0 - 1e-10)
    return -2.0 * (y[:, None] * np.log(mu) + (1.0 - y[:, None]) * np.log(1.0 - mu))


def lasso_fit(
    x,
    y,
    family: str = "gaussian",
    cv_folds: int = CV_FOLDS,
    seed: int = 0,
    lambda_: float | None = None,
    n_lambda: int = N_LAMBDA,
    lambda_min_ratio: float = LAMBDA_MIN_RATIO,
    tol: float = CD_TOL,
    cv_rule: str = "min",
) -> LassoFit:
    """Fit a lasso (gaussian) or l1-penalized logistic (binomial) regression.

    With ``lambda_=None`` the penalty is chosen by ``cv_folds``-fold
    cross-validation: rule "min" takes the path value with minimum mean
    deviance, rule "1se" the largest lambda whose mean deviance stays within
    one fold-level standard error of that minimum. A fixed ``lambda_`` skips
    cross-validation. Deterministic given ``seed``, which only drives the CV
    fold assignment.
    """
    if family not in ("gaussian", "binomial"):
        raise InputError(f"unknown family {family!r}")
    if cv_rule not in ("min", "1se"):
        raise InputError(f"unknown cv_rule {cv_rule!r}")
    x = check_matrix(x, "x")
    n, p = x.shape
    y = check_vector(y, "y", n)
    seed = check_seed(seed)
    if family == "binomial":
        if not np.all((y == 0.0) | (y == 1.0)):
            raise InputError("binomial y must be 0/1")
        if y.min() == y.max():
            raise DegenerateOutcomeError("binomial y has a single class")
    elif y.std() == 0.0:
        return _intercept_only(family, y, p)

    xs, means, scales = _standardize(x)
    lam_max = float(np.max(np.abs(xs.T @ (y - y.mean()) / n))) if p else 0.0
    if lam_max <= 0.0:
        return _intercept_only(family, y, p)

    if lambda_ is not None:
        if lambda_ < 0.0:
            raise InputError("lambda_ must be nonnegative")
        lambdas = np.array([float(lambda_)])
        cv_dev = None
        pick = 0
    else:
        if cv_folds < 2:
            raise InputError("cv_folds must be at least 2")
        if n < cv_folds:
            raise InputError(f"cv_folds={cv_folds} exceeds sample size {n}")
        lambdas = _lambda_grid(lam_max, n_lambda, lambda_min_ratio)
        rng = np.random.default_rng(seed)
        assign = _fold_assignment(n, cv_folds, rng)
        fold_dev = np.zeros((cv_folds, lambdas.shape[0]))
        fold_sizes = np.zeros(cv_folds)
        for k in range(cv_folds):
            test = assign == k
            train = ~test
            if family == "binomial" and y[train].min() == y[train].max():
                raise DegenerateOutcomeError(
                    "a CV training fold contains a single class"
                )
            b0s, betas, m_k, s_k = _fit_path(x[train], y[train], family, lambdas, tol)
            eta = b0s[None, :] + (x[test] - m_k) / s_k @ betas.T
            mu = eta if family == "gaussian" else 1.0 / (1.0 + np.exp(-eta))
            fold_dev[k] = _deviance(family, y[test], mu).mean(axis=0)
            fold_sizes[k] = test.sum()
        weights = fold_sizes / n
        cv_dev = weights @ fold_dev
        best = int(np.argmin(cv_dev))
        if cv_rule == "min":
            pick = best
        else:
            cv_se = fold_dev.std(axis=0, ddof=1) / np.sqrt(cv_folds)
            within = np.flatnonzero(cv_dev <= cv_dev[best] + cv_se[best])
            pick = int(within[0])  # lambdas descend, so the first is largest

    b0s, betas, means, scales = _fit_path(x, y, family, lambdas, tol)
    beta_std = betas[pick]
    b0_std = float(b0s[pick])
    coef = beta_std / scales
    intercept = b0_std - float(coef @ means)
    return LassoFit(
        family=family,
        intercept=intercept,
        coefficients=coef,
        lambda_=float(lambdas[pick]),
        lambda_path=lambdas,
        cv_folds=cv_folds if lambda_ is None else 0,
        cv_deviance=cv_dev,
        column_means=means,
        column_scales=scales,
        coef_std=beta_std,
        intercept_std=b0_std,
    )


def lasso_predict(fit: LassoFit, x) -> np.ndarray:
    """Predict from a :class:`LassoFit`: linear predictor for gaussian fits,
    probabilities in (0, 1) for binomial fits."""
    x = check_matrix(x, "x")
    if x.shape[1] != fit.n_features:
        raise InputError(
            f"x has {x.shape[1]} columns, fit expects {fit.n_features}"
        )
    eta = fit.intercept + x @ fit.coefficients
    if fit.family == "gaussian":
        return eta
    return np.clip(1.0 / (1.0 + np.exp(-eta)), 1e-12, 1.0 - 1e-12)


def gaussian_kkt_gap(fit: LassoFit, x, y) -> np.ndarray:
    """Subgradient values (1/n) xs_j' (y - yhat) on the standardized scale.

    At a converged gaussian solution these are bounded by ``lambda_`` in
    absolute value and equal ``lambda_ * sign(beta_j)`` on active columns.
    """
    x = check_matrix(x, "x")
    y = check_vector(y, "y", x.shape[0])
    xs = (x - fit.column_means) / fit.column_scales
    resid = y - lasso_predict(fit, x)
    return xs.T @ resid / x.shape[0]


class CVLasso(BaseEstimator):
    """Cross-validated lasso with the scikit-learn fit/predict surface.

    Thin estimator wrapper around :func:`lasso_fit` so the learner can be
    dropped into pipelines and cloned; ``family`` is "gaussian" or
    "binomial".
    """

    def __init__(
        self,
        family: str = "gaussian",
        cv_folds: int = CV_FOLDS,
        lambda_: float | None = None,
        n_lambda: int = N_LAMBDA,
        lambda_min_ratio: float = LAMBDA_MIN_RATIO,
        tol: float = CD_TOL,
        cv_rule: str = "min",
        random_state: int = 0,
    ):
        self.family = family
        self.cv_folds = cv_folds
        self.lambda_ = lambda_
        self.n_lambda = n_lambda
        self.lambda_min_ratio = lambda_min_ratio
        self.tol = tol
        self.cv_rule = cv_rule
        self.random_state = random_state

    def fit(self, X, y):
        self.fit_ = lasso_fit(
            X,
            y,
            family=self.family,
            cv_folds=self.cv_folds,
            seed=self.random_state,
            lambda_=self.lambda_,
            n_lambda=self.n_lambda,
            lambda_min_ratio=self.lambda_min_ratio,
            tol=self.tol,
            cv_rule=self.cv_rule,
        )
        self.intercept_ = self.fit_.intercept
        self.coef_ = self.fit_.coefficients
        self.selected_lambda_ = self.fit_.lambda_
        return self

    def predict(self, X):
        return lasso_predict(self.fit_, X)


def ols_fit(x, y, intercept: bool = True, column_names=None) -> OlsFit:
    """Classical least squares with homoskedasticity-based standard errors.

    Raises :class:`SingularMatrixError` naming the offending column when the
    design's reciprocal condition number falls below 1e-12.
    """
    x = check_matrix(x, "x")
    n, p = x.shape
    y = check_vector(y, "y", n)
    if column_names is None:
        column_names = [f"x{j + 1}" for j in range(p)]
    names = (["const"] if intercept else []) + list(column_names)
    design = np.column_stack([np.ones(n), x]) if intercept else x
    k = design.shape[1]
    if n <= k + 1:
        raise InputError(f"need more than {k + 1} rows for {k} coefficients")

    # Rank check on scaled columns via pivoted QR; the first small diagonal
    # of R identifies the column that is linearly dependent on its pivots.
    norms = np.sqrt((design**2).sum(axis=0))
    norms[norms == 0.0] = 1.0
    _, r, piv = scipy.linalg.qr(design / norms, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag[0] == 0.0 or diag.min() / diag[0] < OLS_RCOND:
        bad = names[piv[int(np.argmin(diag))]]
        raise SingularMatrixError(
            f"design matrix is rank deficient: column {bad!r} is collinear",
            column=bad,
        )

    xtx = design.T @ design
    xtx_inv = np.linalg.inv(xtx)
    coef = xtx_inv @ (design.T @ y)
    fitted = design @ coef
    resid = y - fitted
    dof = n - k
    sigma2 = float(resid @ resid) / dof
    se = np.sqrt(np.maximum(sigma2 * np.diag(xtx_inv), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0.0, coef / np.where(se > 0.0, se, 1.0), 0.0)
    return OlsFit(
        coefficients=coef,
        standard_errors=se,
        t_stats=t,
        residual_variance=sigma2,
        names=names,
        n=n,
        fitted=fitted,
        residuals=resid,
        xtx_inv=xtx_inv,
    )


def first_stage_all(data: Dataset) -> np.ndarray:
    """F statistics (squared t) for every candidate from the joint regression
    of the treatment on all candidates plus an intercept."""
    fit = ols_fit(data.q, data.d, intercept=True, column_names=data.candidate_names)
    return fit.t_stats[1:] ** 2


def first_stage_f(data: Dataset, j: int) -> float:
    """First-stage F statistic for candidate ``j``."""
    if not 0 <= j < data.n_candidates:
        raise InputError(f"candidate index {j} out of range")
    return float(first_stage_all(data)[j])
