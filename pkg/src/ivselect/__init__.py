"""ivselect: data-driven selection of instruments and control variables.

Given an outcome, a binary treatment and a matrix of candidate pre-treatment
variables, the package searches for a partition of the candidates into one
instrument and a control set under which treatment exogeneity and instrument
validity jointly hold, using cross-fitted double-machine-learning tests of
conditional mean independence.
"""

from .binning import InstrumentBinning, make_bins
from .crossfit import (
    ConditionalIndependenceTest,
    CrossFitConfig,
    FoldPlan,
    LearnerConfig,
    NuisanceEstimates,
    TestResult,
    crossfit_theta,
    fit_nuisances,
    make_folds,
)
from .dataset import Dataset
from .exceptions import (
    ConfigError,
    DegenerateInstrumentError,
    DegenerateOutcomeError,
    DegenerateVarianceError,
    FoldDegeneracyError,
    InputError,
    InsufficientDataError,
    IvSelectError,
    SingularMatrixError,
    TrimmingError,
)
from .linear_model import (
    CVLasso,
    LassoFit,
    OlsFit,
    first_stage_all,
    first_stage_f,
    gaussian_kkt_gap,
    lasso_fit,
    lasso_predict,
    ols_fit,
)
from .partition import Partition
from .report import report_from_dict, report_to_dict, summary_text
from .scores import (
    ScoreConfig,
    draw_zeta,
    multi_scores,
    score_binary,
    score_multi,
    score_quadratic,
)
from .selection import (
    CandidateTest,
    EffectEstimate,
    PartitionSearch,
    PipelineConfig,
    SelectionReport,
    StrongSelection,
    choose_final,
    estimate_effect,
    run_pipeline,
    select_strong,
    test_all_candidates,
)
from .simulation import (
    DgpConfig,
    McMetrics,
    MultiLevelDgpConfig,
    MultiLevelOracle,
    OracleNuisances,
    Scenario,
    default_scenarios,
    generate,
    generate_multilevel,
    oracle_nuisances,
    oracle_statistic,
    run_monte_carlo,
)

__version__ = "0.1.0"

__all__ = [
    "CVLasso", "CandidateTest", "ConditionalIndependenceTest", "ConfigError",
    "CrossFitConfig", "Dataset", "DegenerateInstrumentError",
    "DegenerateOutcomeError", "DegenerateVarianceError", "DgpConfig",
    "EffectEstimate", "FoldDegeneracyError", "FoldPlan", "InputError",
    "InstrumentBinning", "InsufficientDataError", "IvSelectError", "LassoFit",
    "LearnerConfig", "McMetrics", "MultiLevelDgpConfig", "MultiLevelOracle",
    "NuisanceEstimates", "OlsFit", "OracleNuisances", "Partition",
    "PartitionSearch", "PipelineConfig", "Scenario", "ScoreConfig",
    "SelectionReport", "SingularMatrixError", "StrongSelection", "TestResult",
    "TrimmingError", "choose_final", "crossfit_theta", "default_scenarios",
    "draw_zeta", "estimate_effect", "first_stage_all", "first_stage_f",
    "fit_nuisances", "gaussian_kkt_gap", "generate", "generate_multilevel",
    "lasso_fit", "lasso_predict", "make_bins", "make_folds", "multi_scores",
    "ols_fit", "oracle_nuisances", "oracle_statistic", "report_from_dict",
    "report_to_dict", "run_monte_carlo", "run_pipeline", "score_binary",
    "score_multi", "score_quadratic", "select_strong", "summary_text",
    "test_all_candidates",
]
