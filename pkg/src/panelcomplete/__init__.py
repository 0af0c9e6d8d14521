"""Low-rank completion of partially observed panels with debiased inference.

The pipeline: estimate row observation propensities, solve an inverse-
probability-weighted nuclear-norm program for an initial low-rank estimate,
refit factors and loadings by two single-pass least squares, and read off
normal-theory confidence intervals for entries, group averages, and average
treatment effects. A seeded Monte Carlo harness reproduces the method's
simulation benchmarks at desk scale.
"""

__version__ = "0.1.0"

from .errors import (
    AllCandidatesFailed,
    ConvergenceWarning,
    DataError,
    DuplicateCell,
    EmptyColumn,
    EmptyRow,
    McUnstable,
    MixedTreatmentSchema,
    NonFinite,
    NumericalError,
    OutOfRange,
    PanelCompleteError,
    ParseError,
    RankDeficient,
    ShapeMismatch,
    SingularDesign,
    TooFewPeriods,
    ZeroMatrix,
)
from .inference import (
    InferenceResult,
    ResidualModel,
    compute_residuals,
    group_average_ci,
    group_variance,
)
from .io import load_panel, save_completed, save_panel, write_report
from .panel import (
    GroupSpec,
    ObservedPanel,
    PropensityEstimate,
    estimate_propensity,
    weighted_residual_norm,
)
from .rank import RankSelection, cv_splits, rank_cv, rank_threshold
from .simulate import DgpSpec, McReport, PanelDraw, TreatmentDraw, generate, run_mc
from .solver import (
    LowRankEstimate,
    SolverOptions,
    default_lambda,
    deterministic_svd,
    nuclear_norm,
    soft_threshold_svd,
    solve_nuclear_norm,
)
from .treatment import (
    AteResult,
    TreatmentPanel,
    ate_inference,
    bh_fdr,
    split_arms,
)
from .twostep import (
    FactorFit,
    SampleSplitFit,
    estimate_factors,
    estimate_loadings,
    initial_loadings,
    tls_fit,
    tls_fit_sample_split,
)

__all__ = [
    "__version__",
    "AllCandidatesFailed",
    "AteResult",
    "ConvergenceWarning",
    "DataError",
    "DgpSpec",
    "DuplicateCell",
    "EmptyColumn",
    "EmptyRow",
    "FactorFit",
    "GroupSpec",
    "InferenceResult",
    "LowRankEstimate",
    "McReport",
    "McUnstable",
    "MixedTreatmentSchema",
    "NonFinite",
    "NumericalError",
    "ObservedPanel",
    "OutOfRange",
    "PanelCompleteError",
    "PanelDraw",
    "ParseError",
    "PropensityEstimate",
    "RankDeficient",
    "RankSelection",
    "ResidualModel",
    "SampleSplitFit",
    "ShapeMismatch",
    "SingularDesign",
    "SolverOptions",
    "TooFewPeriods",
    "TreatmentDraw",
    "TreatmentPanel",
    "ZeroMatrix",
    "ate_inference",
    "bh_fdr",
    "compute_residuals",
    "cv_splits",
    "default_lambda",
    "deterministic_svd",
    "estimate_factors",
    "estimate_loadings",
    "estimate_propensity",
    "generate",
    "group_average_ci",
    "group_variance",
    "initial_loadings",
    "load_panel",
    "nuclear_norm",
    "rank_cv",
    "rank_threshold",
    "run_mc",
    "save_completed",
    "save_panel",
    "soft_threshold_svd",
    "solve_nuclear_norm",
    "split_arms",
    "tls_fit",
    "tls_fit_sample_split",
    "weighted_residual_norm",
    "write_report",
]
