"""Cross-fitted estimation of the conditional independence test statistic.

Nuisances are trained on each fold's complement and evaluated out of fold;
the estimator averages fold means of the score at theta = 0, and its
variance pools the squared out-of-fold scores at the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from sklearn.base import BaseEstimator

from ._seeds import derive_seed
from .dataset import Dataset
from .exceptions import (
    DegenerateOutcomeError,
    DegenerateVarianceError,
    FoldDegeneracyError,
    InputError,
    InsufficientDataError,
)
from .linear_model import lasso_fit, lasso_predict
from .partition import Partition
from .scores import EPSILON_TRIM, multi_scores
from .validation import check_seed

# tag values for derive_seed paths
_TAG_REDRAW = 104729
_TAG_MU_IN, _TAG_MU_OUT, _TAG_PROP, _TAG_M = 0, 1, 2, 3


@dataclass
class FoldPlan:
    """Balanced random assignment of n observations to K folds."""

    n: int
    n_folds: int
    assignment: np.ndarray
    seed: int

    def fold_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def complement_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != k)


def make_folds(n: int, n_folds: int, seed: int) -> FoldPlan:
    """Uniformly random fold assignment with sizes differing by at most one."""
    if n_folds < 2:
        raise InputError("n_folds must be at least 2")
    if n < 2 * n_folds:
        raise InsufficientDataError(
            f"need at least {2 * n_folds} observations for {n_folds} folds, got {n}"
        )
    seed = check_seed(seed)
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    assignment[rng.permutation(n)] = np.arange(n) % n_folds
    return FoldPlan(n=n, n_folds=n_folds, assignment=assignment, seed=seed)


@dataclass
class LearnerConfig:
    """Settings for the lasso nuisance learner.

    ``cv_rule`` "min" takes the lambda with minimum mean CV deviance;
    "1se" takes the largest lambda within one standard error of it.
    """

    cv_folds: int = 10
    n_lambda: int = 100
    lambda_min_ratio: float = 1e-3
    cv_rule: str = "min"
    min_train_bin: int = 20

    def fit_kwargs(self) -> dict:
        return {
            "cv_folds": self.cv_folds,
            "n_lambda": self.n_lambda,
            "lambda_min_ratio": self.lambda_min_ratio,
            "cv_rule": self.cv_rule,
        }


@dataclass
class NuisanceEstimates:
    """Out-of-fold nuisance values for a block of evaluation observations.

    ``mu_in[i, l]`` / ``mu_out[i, l]`` are the conditional outcome means
    given the instrument falling inside / outside bin l, fitted on the
    corresponding training subsamples; ``p[i, l]`` is the trimmed instrument
    propensity; ``m`` is the full-training-sample conditional mean used only
    by the legacy quadratic score.
    """

    mu_in: np.ndarray
    mu_out: np.ndarray
    p: np.ndarray
    m: np.ndarray | None
    n_trimmed: int


def fit_nuisances(
    data: Dataset,
    partition: Partition,
    train_idx: np.ndarray,
    eval_idx: np.ndarray,
    learner: LearnerConfig | None = None,
    trim: float = EPSILON_TRIM,
    seed: int = 0,
    include_m: bool = False,
) -> NuisanceEstimates:
    """Fit all nuisances on ``train_idx`` and predict them on ``eval_idx``.

    The outcome means are fit separately within the {Z in bin} and
    {Z outside bin} training subsamples so no functional form in the
    instrument is imposed; propensities come from a binomial lasso of the
    bin indicator on (D, X) and are clipped to the trim bounds.
    """
    learner = learner or LearnerConfig()
    train_idx = np.asarray(train_idx, dtype=np.int64)
    eval_idx = np.asarray(eval_idx, dtype=np.int64)
    if np.intersect1d(train_idx, eval_idx).size:
        raise InputError("train and eval indices overlap")
    z = partition.instrument(data)
    features = np.column_stack([data.d, partition.covariates(data)])
    member_train = partition.binning.membership(z[train_idx])
    n_bins = member_train.shape[1]
    feats_train = features[train_idx]
    feats_eval = features[eval_idx]
    y_train = data.y[train_idx]

    mu_in = np.empty((eval_idx.shape[0], n_bins))
    mu_out = np.empty_like(mu_in)
    p = np.empty_like(mu_in)
    n_trimmed = 0
    for l in range(n_bins):
        inside = member_train[:, l]
        n_in, n_out = int(inside.sum()), int((~inside).sum())
        if min(n_in, n_out) < learner.min_train_bin:
            raise FoldDegeneracyError(
                f"training fold has only {min(n_in, n_out)} observations on "
                f"one side of bin {l} (need {learner.min_train_bin})"
            )
        fit_in = lasso_fit(
            feats_train[inside],
            y_train[inside],
            family="gaussian",
            seed=derive_seed(seed, l, _TAG_MU_IN),
            **learner.fit_kwargs(),
        )
        fit_out = lasso_fit(
            feats_train[~inside],
            y_train[~inside],
            family="gaussian",
            seed=derive_seed(seed, l, _TAG_MU_OUT),
            **learner.fit_kwargs(),
        )
        try:
            fit_p = lasso_fit(
                feats_train,
                inside.astype(float),
                family="binomial",
                seed=derive_seed(seed, l, _TAG_PROP),
                **learner.fit_kwargs(),
            )
        except DegenerateOutcomeError as err:
            raise FoldDegeneracyError(str(err)) from err
        mu_in[:, l] = lasso_predict(fit_in, feats_eval)
        mu_out[:, l] = lasso_predict(fit_out, feats_eval)
        raw_p = lasso_predict(fit_p, feats_eval)
        n_trimmed += int(np.count_nonzero((raw_p < trim) | (raw_p > 1.0 - trim)))
        p[:, l] = np.clip(raw_p, trim, 1.0 - trim)

    m = None
    if include_m:
        fit_m = lasso_fit(
            feats_train,
            y_train,
            family="gaussian",
            seed=derive_seed(seed, _TAG_M),
            **learner.fit_kwargs(),
        )
        m = lasso_predict(fit_m, feats_eval)
    return NuisanceEstimates(mu_in=mu_in, mu_out=mu_out, p=p, m=m, n_trimmed=n_trimmed)


@dataclass
class CrossFitConfig:
    """Settings for one cross-fitted test run."""

    n_folds: int = 2
    trim: float = EPSILON_TRIM
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    include_m: bool = False
    allow_redraw: bool = True


@dataclass
class TestResult:
    """Cross-fitted test of conditional mean independence for one partition."""

    theta: float
    sigma: float
    t_stat: float
    p_value: float
    n: int
    n_bins: int
    n_folds: int
    per_fold_theta: list[float]
    n_trimmed: int
    outcome_r2: float
    propensity_deviance: float

    def rejects(self, alpha: float) -> bool:
        return self.p_value <= alpha


def _observed_mu(member: np.ndarray, mu_in: np.ndarray, mu_out: np.ndarray) -> np.ndarray:
    """Prediction of E[Y | D, X, Z] at each observation's own bin."""
    inside = member.astype(float)
    pred = (mu_in * inside).sum(axis=1)
    if member.shape[1] == 1:
        pred += (mu_out * (1.0 - inside)).sum(axis=1)
    return pred


def crossfit_theta(
    data: Dataset,
    partition: Partition,
    config: CrossFitConfig | None = None,
    seed: int = 0,
) -> TestResult:
    """Cross-fitted estimate, variance, t statistic and two-sided p-value.

    theta is the average over folds of the fold mean of the score at
    theta = 0 with nuisances trained on the fold's complement; sigma^2 pools
    all out-of-fold squared scores evaluated at the estimate. One automatic
    fold re-draw is attempted when a training fold loses an instrument bin.
    """
    config = config or CrossFitConfig()
    seed = check_seed(seed)
    z = partition.instrument(data)
    if np.unique(z).size < 2:
        raise InputError("instrument is constant")
    n = data.n
    member_all = partition.binning.membership(z)
    n_bins = member_all.shape[1]

    attempts = [seed]
    if config.allow_redraw:
        attempts.append(derive_seed(seed, _TAG_REDRAW))
    last_err = None
    for attempt, fold_seed in enumerate(attempts):
        plan = make_folds(n, config.n_folds, fold_seed)
        try:
            scores = np.empty(n)
            mu_obs = np.empty(n)
            prop_dev = 0.0
            per_fold = []
            n_trimmed = 0
            for k in range(config.n_folds):
                eval_idx = plan.fold_indices(k)
                nus = fit_nuisances(
                    data,
                    partition,
                    plan.complement_indices(k),
                    eval_idx,
                    learner=config.learner,
                    trim=config.trim,
                    seed=derive_seed(fold_seed, k),
                    include_m=config.include_m,
                )
                member = member_all[eval_idx]
                fold_scores = multi_scores(
                    data.y[eval_idx],
                    member,
                    nus.mu_in,
                    nus.mu_out,
                    nus.p,
                    theta=0.0,
                    trim=config.trim,
                )
                scores[eval_idx] = fold_scores
                per_fold.append(float(fold_scores.mean()))
                n_trimmed += nus.n_trimmed
                mu_obs[eval_idx] = _observed_mu(member, nus.mu_in, nus.mu_out)
                inside = member.astype(float)
                prop_dev += float(
                    -2.0
                    * (
                        inside * np.log(nus.p) + (1.0 - inside) * np.log(1.0 - nus.p)
                    ).sum()
                )
            break
        except FoldDegeneracyError as err:
            last_err = err
    else:
        raise FoldDegeneracyError(
            f"fold degeneracy persisted after re-drawing folds: {last_err}"
        )

    theta = float(np.mean(per_fold))
    sigma2 = float(np.mean((scores - theta) ** 2))
    if not np.isfinite(sigma2) or sigma2 <= 0.0:
        raise DegenerateVarianceError("score variance estimate is zero")
    sigma = float(np.sqrt(sigma2))
    t_stat = float(np.sqrt(n) * theta / sigma)
    p_value = float(2.0 * ndtr(-abs(t_stat)))
    sst = float(((data.y - data.y.mean()) ** 2).sum())
    outcome_r2 = 1.0 - float(((data.y - mu_obs) ** 2).sum()) / sst if sst > 0 else 0.0
    return TestResult(
        theta=theta,
        sigma=sigma,
        t_stat=t_stat,
        p_value=p_value,
        n=n,
        n_bins=n_bins,
        n_folds=config.n_folds,
        per_fold_theta=per_fold,
        n_trimmed=n_trimmed,
        outcome_r2=outcome_r2,
        propensity_deviance=prop_dev / (n * n_bins),
    )


class ConditionalIndependenceTest(BaseEstimator):
    """Cross-fitted test that a candidate instrument carries no information
    about the outcome once the treatment and covariates are conditioned on.

    Parameters mirror :class:`CrossFitConfig`; ``fit`` expects the outcome,
    the binary treatment, a covariate matrix and the candidate instrument.
    """

    def __init__(
        self,
        n_folds: int = 2,
        n_bins: int = 4,
        trim: float = EPSILON_TRIM,
        cv_folds: int = 10,
        random_state: int = 0,
    ):
        self.n_folds = n_folds
        self.n_bins = n_bins
        self.trim = trim
        self.cv_folds = cv_folds
        self.random_state = random_state

    def fit(self, y, d, x, z):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.size == 0:
            q = np.asarray(z, dtype=float).reshape(-1, 1)
        else:
            q = np.column_stack([np.asarray(z, dtype=float), x])
        data = Dataset(y=np.asarray(y, float), d=np.asarray(d, float), q=q)
        partition = Partition.for_candidate(data, 0, requested_bins=self.n_bins)
        config = CrossFitConfig(
            n_folds=self.n_folds,
            trim=self.trim,
            learner=LearnerConfig(cv_folds=self.cv_folds),
        )
        self.result_ = crossfit_theta(data, partition, config, seed=self.random_state)
        self.theta_ = self.result_.theta
        self.sigma_ = self.result_.sigma
        self.t_stat_ = self.result_.t_stat
        self.p_value_ = self.result_.p_value
        return self
