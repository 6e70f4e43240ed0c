"""Data-driven partition search: screening, testing, choice, effect估.

The pipeline regresses the treatment on all candidates and keeps those with
first-stage F above a hard threshold, tests each survivor as the instrument
with the cross-fitted conditional independence test, and either rejects
identification (no candidate passes) or picks the passing partition with
the largest p-value (mode "pmax") or pools all passing instruments
(mode "all"). When identification is kept, the treatment effect is
estimated by OLS on the selected covariates, with a cross-fitted AIPW
estimate reported alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.special import ndtri
from sklearn.base import BaseEstimator

from ._seeds import derive_seed
from .crossfit import CrossFitConfig, LearnerConfig, TestResult, crossfit_theta, make_folds
from .dataset import Dataset
from .exceptions import ConfigError, DegenerateInstrumentError, InputError, IvSelectError
from .linear_model import first_stage_all, lasso_fit, lasso_predict, ols_fit
from .partition import Partition

_TAG_EFFECT = 271828


@dataclass
class PipelineConfig:
    """Settings of the full selection pipeline."""

    alpha: float = 0.10
    fs_level: float | None = None
    n_folds: int = 2
    n_bins: int = 4
    trim: float = 0.01
    mode: str = "pmax"
    cv_folds: int = 10
    cv_rule: str = "min"
    min_cell: int = 10
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.fs_level is not None and not 0.0 < self.fs_level <= 1.0:
            raise ConfigError("fs_level must lie in (0, 1]")
        if self.n_folds < 2:
            raise ConfigError("n_folds must be at least 2")
        if self.n_bins < 1:
            raise ConfigError("n_bins must be at least 1")
        if not 0.0 < self.trim < 0.5:
            raise ConfigError("trim must lie in (0, 0.5)")
        if self.mode not in ("pmax", "all"):
            raise ConfigError(f"unknown mode {self.mode!r}")

    def resolved_fs_level(self, n: int) -> float:
        if self.fs_level is not None:
            return self.fs_level
        return 0.1 / math.log(n)

    def crossfit_config(self) -> CrossFitConfig:
        return CrossFitConfig(
            n_folds=self.n_folds,
            trim=self.trim,
            learner=LearnerConfig(cv_folds=self.cv_folds, cv_rule=self.cv_rule),
        )


def f_threshold(fs_level: float) -> float:
    """Chi-squared(1) upper quantile at ``fs_level`` via the normal inverse."""
    if fs_level >= 1.0:
        return 0.0
    return float(ndtri(1.0 - fs_level / 2.0) ** 2)


@dataclass
class StrongSelection:
    """First-stage screening output."""

    f_stats: np.ndarray
    threshold: float
    fs_level: float
    strong: list[int]
    excluded: dict[int, str]
    partitions: dict[int, Partition]


def select_strong(
    data: Dataset,
    fs_level: float | None = None,
    n_bins: int = 4,
    min_cell: int = 10,
) -> StrongSelection:
    """Candidates whose first-stage F exceeds the hard threshold.

    F_j is the squared t statistic of candidate j in the joint regression of
    the treatment on all candidates; the threshold is the chi-squared(1)
    quantile at ``fs_level`` (default 0.1/log(n)). Candidates with a
    degenerate binning or fewer than ``min_cell`` observations in some
    instrument cell within a treatment arm are excluded with a reason.
    """
    level = fs_level if fs_level is not None else 0.1 / math.log(data.n)
    threshold = f_threshold(level)
    f_stats = first_stage_all(data)
    strong: list[int] = []
    excluded: dict[int, str] = {}
    partitions: dict[int, Partition] = {}
    for j in range(data.n_candidates):
        if f_stats[j] < threshold:
            continue
        try:
            part = Partition.for_candidate(data, j, requested_bins=n_bins)
        except DegenerateInstrumentError as err:
            excluded[j] = str(err)
            continue
        labels = part.binning.labels(data.q[:, j])
        n_cells = int(labels.max()) + 1
        cell_ok = True
        for cell in range(n_cells):
            for arm in (0.0, 1.0):
                count = int(np.count_nonzero((labels == cell) & (data.d == arm)))
                if count < min_cell:
                    excluded[j] = (
                        f"only {count} observations with instrument cell {cell} "
                        f"and treatment {int(arm)} (need {min_cell})"
                    )
                    cell_ok = False
                    break
            if not cell_ok:
                break
        if cell_ok:
            strong.append(j)
            partitions[j] = part
    return StrongSelection(
        f_stats=f_stats,
        threshold=threshold,
        fs_level=level,
        strong=strong,
        excluded=excluded,
        partitions=partitions,
    )


@dataclass
class CandidateTest:
    """Outcome of testing one candidate as the instrument."""

    index: int
    name: str
    f_stat: float
    result: TestResult | None = None
    error: str | None = None


def _test_one(data, j, name, f_stat, partition, config, seed) -> CandidateTest:
    try:
        result = crossfit_theta(data, partition, config, seed=seed)
        return CandidateTest(index=j, name=name, f_stat=f_stat, result=result)
    except (IvSelectError, FloatingPointError) as err:
        return CandidateTest(
            index=j, name=name, f_stat=f_stat, error=f"{type(err).__name__}: {err}"
        )


def test_all_candidates(
    data: Dataset,
    selection: StrongSelection,
    config: PipelineConfig,
) -> dict[int, CandidateTest]:
    """Run the cross-fitted test for every screened candidate.

    Candidates run as independent parallel work units with seeds derived
    from the pipeline seed and the candidate index, so results do not
    depend on the execution order. Per-candidate failures are recorded and
    the candidate simply cannot enter the passing set.
    """
    if not selection.strong:
        raise InputError("no candidates survived first-stage screening")
    cf_config = config.crossfit_config()
    jobs = (
        delayed(_test_one)(
            data,
            j,
            data.candidate_names[j],
            float(selection.f_stats[j]),
            selection.partitions[j],
            cf_config,
            derive_seed(config.seed, j),
        )
        for j in selection.strong
    )
    tests = Parallel(n_jobs=config.n_jobs)(jobs)
    return {t.index: t for t in tests}


@dataclass
class FinalChoice:
    """Final partition choice after testing."""

    identified: bool
    mode: str
    instrument_indices: list[int] = field(default_factory=list)
    p_value: float | None = None


def choose_final(
    tests: dict[int, CandidateTest], mode: str = "pmax", alpha: float = 0.10
) -> FinalChoice:
    """Pick the final partition from the passing set.

    Empty passing set means identification is rejected. With several
    passing candidates, mode "pmax" takes the largest p-value (ties broken
    by larger first-stage F, then lower index) and mode "all" pools every
    passing candidate into the instrument set.
    """
    passing = [
        t for t in tests.values() if t.result is not None and t.result.p_value > alpha
    ]
    if not passing:
        return FinalChoice(identified=False, mode=mode)
    if mode == "all" and len(passing) > 1:
        return FinalChoice(
            identified=True,
            mode=mode,
            instrument_indices=sorted(t.index for t in passing),
        )
    winner = max(passing, key=lambda t: (t.result.p_value, t.f_stat, -t.index))
    return FinalChoice(
        identified=True,
        mode=mode,
        instrument_indices=[winner.index],
        p_value=winner.result.p_value,
    )


@dataclass
class EffectEstimate:
    """Post-identification treatment effect estimates."""

    ols: float
    ols_se: float
    aipw: float
    aipw_se: float


def estimate_effect(
    data: Dataset,
    covariate_indices,
    n_folds: int = 2,
    trim: float = 0.01,
    cv_folds: int = 10,
    cv_rule: str = "min",
    seed: int = 0,
) -> EffectEstimate:
    """OLS effect of the treatment controlling for the selected covariates,
    plus a cross-fitted AIPW estimate as a robustness companion."""
    covariate_indices = np.asarray(covariate_indices, dtype=np.int64)
    x = data.q[:, covariate_indices]
    design = np.column_stack([data.d, x])
    names = ["d"] + [data.candidate_names[int(j)] for j in covariate_indices]
    fit = ols_fit(design, data.y, intercept=True, column_names=names)
    ols_est = float(fit.coefficients[1])
    ols_se = float(fit.standard_errors[1])

    plan = make_folds(data.n, n_folds, derive_seed(seed, _TAG_EFFECT))
    mu1 = np.empty(data.n)
    mu0 = np.empty(data.n)
    e_hat = np.empty(data.n)
    for k in range(n_folds):
        train = plan.complement_indices(k)
        evl = plan.fold_indices(k)
        x_train, x_eval = x[train], x[evl]
        d_train = data.d[train]
        for arm, out in ((1.0, mu1), (0.0, mu0)):
            arm_rows = d_train == arm
            fit_arm = lasso_fit(
                x_train[arm_rows],
                data.y[train][arm_rows],
                family="gaussian",
                cv_folds=cv_folds,
                cv_rule=cv_rule,
                seed=derive_seed(seed, _TAG_EFFECT, k, int(arm)),
            )
            out[evl] = lasso_predict(fit_arm, x_eval)
        fit_e = lasso_fit(
            x_train,
            d_train,
            family="binomial",
            cv_folds=cv_folds,
            cv_rule=cv_rule,
            seed=derive_seed(seed, _TAG_EFFECT, k, 2),
        )
        e_hat[evl] = np.clip(lasso_predict(fit_e, x_eval), trim, 1.0 - trim)
    influence = (
        mu1
        - mu0
        + data.d * (data.y - mu1) / e_hat
        - (1.0 - data.d) * (data.y - mu0) / (1.0 - e_hat)
    )
    aipw = float(influence.mean())
    aipw_se = float(np.sqrt(np.mean((influence - aipw) ** 2) / data.n))
    return EffectEstimate(ols=ols_est, ols_se=ols_se, aipw=aipw, aipw_se=aipw_se)


@dataclass
class SelectionReport:
    """Everything the pipeline learned about one dataset."""

    n: int
    candidate_names: list[str]
    alpha: float
    fs_level: float
    f_threshold: float
    f_stats: dict[int, float]
    strong: list[int]
    excluded: dict[int, str]
    tests: dict[int, CandidateTest]
    pass_set: list[int]
    mode: str
    identified: bool
    instrument_indices: list[int]
    covariate_indices: list[int]
    p_value: float | None
    effect_ols: tuple[float, float] | None
    effect_aipw: tuple[float, float] | None
    joint_cells: dict[str, int] | None
    small_joint_cells: list[str]
    n_folds: int
    n_bins: int
    trim: float
    cv_folds: int
    seed: int
    multiple_testing: str = "none"


def _stage(name: str):
    class _StageContext:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and isinstance(exc, IvSelectError):
                exc.args = (f"{name}: {exc}",)
            return False

    return _StageContext()


def _joint_cells(data: Dataset, instrument_indices, min_cell: int):
    """Cross-classification of pooled instruments, flagging thin cells."""
    cols = data.q[:, np.asarray(instrument_indices, dtype=np.int64)]
    uniq, counts = np.unique(cols, axis=0, return_counts=True)
    cells = {
        "/".join(f"{v:g}" for v in row): int(c) for row, c in zip(uniq, counts)
    }
    small = [k for k, c in cells.items() if c < min_cell]
    return cells, small


def run_pipeline(data: Dataset, config: PipelineConfig | None = None) -> SelectionReport:
    """Full search: screen, test every screened candidate, choose, estimate."""
    config = config or PipelineConfig()
    if np.unique(data.d).size < 2:
        raise InputError("treatment has a single arm")
    if data.n < 2 * config.n_folds:
        raise InputError(
            f"need at least {2 * config.n_folds} observations, got {data.n}"
        )

    with _stage("strong-selection"):
        selection = select_strong(
            data,
            fs_level=config.fs_level,
            n_bins=config.n_bins,
            min_cell=config.min_cell,
        )
    tests: dict[int, CandidateTest] = {}
    if selection.strong:
        with _stage("independence-testing"):
            tests = test_all_candidates(data, selection, config)
    with _stage("final-choice"):
        final = choose_final(tests, mode=config.mode, alpha=config.alpha)

    pass_set = sorted(
        t.index
        for t in tests.values()
        if t.result is not None and t.result.p_value > config.alpha
    )
    covariates: list[int] = []
    effect = None
    joint_cells = None
    small_cells: list[str] = []
    if final.identified:
        covariates = [
            j for j in range(data.n_candidates) if j not in final.instrument_indices
        ]
        with _stage("effect-estimation"):
            effect = estimate_effect(
                data,
                covariates,
                n_folds=config.n_folds,
                trim=config.trim,
                cv_folds=config.cv_folds,
                cv_rule=config.cv_rule,
                seed=config.seed,
            )
        if len(final.instrument_indices) > 1:
            joint_cells, small_cells = _joint_cells(
                data, final.instrument_indices, config.min_cell
            )
    return SelectionReport(
        n=data.n,
        candidate_names=list(data.candidate_names),
        alpha=config.alpha,
        fs_level=selection.fs_level,
        f_threshold=selection.threshold,
        f_stats={j: float(selection.f_stats[j]) for j in range(data.n_candidates)},
        strong=list(selection.strong),
        excluded=dict(selection.excluded),
        tests=tests,
        pass_set=pass_set,
        mode=config.mode,
        identified=final.identified,
        instrument_indices=list(final.instrument_indices),
        covariate_indices=covariates,
        p_value=final.p_value,
        effect_ols=(effect.ols, effect.ols_se) if effect else None,
        effect_aipw=(effect.aipw, effect.aipw_se) if effect else None,
        joint_cells=joint_cells,
        small_joint_cells=small_cells,
        n_folds=config.n_folds,
        n_bins=config.n_bins,
        trim=config.trim,
        cv_folds=config.cv_folds,
        seed=config.seed,
    )


class PartitionSearch(BaseEstimator):
    """Estimator facade over :func:`run_pipeline`.

    ``fit(y, d, q)`` runs the full search; afterwards ``report_`` holds the
    :class:`SelectionReport`, ``identified_`` the verdict, and
    ``instrument_names_`` / ``effect_`` the chosen partition and effect.
    """

    def __init__(
        self,
        alpha: float = 0.10,
        fs_level: float | None = None,
        n_folds: int = 2,
        n_bins: int = 4,
        trim: float = 0.01,
        mode: str = "pmax",
        cv_folds: int = 10,
        cv_rule: str = "min",
        min_cell: int = 10,
        random_state: int = 0,
        n_jobs: int = 1,
    ):
        self.alpha = alpha
        self.fs_level = fs_level
        self.n_folds = n_folds
        self.n_bins = n_bins
        self.trim = trim
        self.mode = mode
        self.cv_folds = cv_folds
        self.cv_rule = cv_rule
        self.min_cell = min_cell
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, y, d, q, candidate_names=None):
        data = Dataset(
            y=np.asarray(y, float),
            d=np.asarray(d, float),
            q=np.asarray(q, float),
            candidate_names=list(candidate_names) if candidate_names else [],
        )
        config = PipelineConfig(
            alpha=self.alpha,
            fs_level=self.fs_level,
            n_folds=self.n_folds,
            n_bins=self.n_bins,
            trim=self.trim,
            mode=self.mode,
            cv_folds=self.cv_folds,
            cv_rule=self.cv_rule,
            min_cell=self.min_cell,
            seed=self.random_state,
            n_jobs=self.n_jobs,
        )
        self.report_ = run_pipeline(data, config)
        self.identified_ = self.report_.identified
        self.instrument_names_ = [
            data.candidate_names[j] for j in self.report_.instrument_indices
        ]
        self.effect_ = self.report_.effect_ols
        self.p_value_ = self.report_.p_value
        return self
