"""Rolling graphical-structure estimation and Bayesian changepoint screening.

Two pipelines share this package: ``contagion`` turns a panel of index
returns into a time series of sparse conditional-independence graphs over
four-factor residuals, and ``screen`` scores a cohort of firm performance
series for single regime shifts with closed-form marginals and a collapsed
Gibbs sampler. Both are exposed as plain functions, as scikit-learn style
estimators, and through the ``regimescan`` command line.
"""

__version__ = "0.1.0"

from .changepoint import (
    ChangepointPosterior,
    ChangepointScreener,
    CohortWeights,
    FirmSeries,
    MarginalTable,
    Priors,
    block_log_marginal,
    changepoint_conditional,
    filter_cohort,
    gibbs_screen,
    precompute_marginals,
    sample_cohort_weights,
    screen,
)
from .errors import (
    ConvergenceError,
    DataValidationError,
    EnumerationLimitError,
    NumericalError,
    RankDeficiencyError,
    RegimescanError,
)
from .factors import (
    FactorFit,
    FactorPanel,
    FourFactorResiduals,
    build_residual_panel,
    excess_eu_volatility,
    fit_four_factor,
)
from .graphs import (
    GraphSnapshot,
    Neighborhood,
    RollingGraphSelector,
    WindowSpec,
    assemble_adjacency,
    coefficient_series,
    degree_series,
    empty_graph_test,
    reconstruct_covariance,
    rolling_graphs,
    select_neighborhood,
)
from .linear import (
    DesignMatrix,
    RegressionFit,
    SubsetModel,
    best_subset_bic,
    bic_score,
    lasso_fit,
    ols_fit,
    ridge_fit,
)
from .simulate import (
    ContagionSim,
    FirmSim,
    chain_precision,
    flip_edge,
    simulate_contagion,
    simulate_firms,
)

__all__ = [
    "__version__",
    # errors
    "ConvergenceError",
    "DataValidationError",
    "EnumerationLimitError",
    "NumericalError",
    "RankDeficiencyError",
    "RegimescanError",
    # linear primitives
    "DesignMatrix",
    "RegressionFit",
    "SubsetModel",
    "best_subset_bic",
    "bic_score",
    "lasso_fit",
    "ols_fit",
    "ridge_fit",
    # factor model
    "FactorFit",
    "FactorPanel",
    "FourFactorResiduals",
    "build_residual_panel",
    "excess_eu_volatility",
    "fit_four_factor",
    # graphs
    "GraphSnapshot",
    "Neighborhood",
    "RollingGraphSelector",
    "WindowSpec",
    "assemble_adjacency",
    "coefficient_series",
    "degree_series",
    "empty_graph_test",
    "reconstruct_covariance",
    "rolling_graphs",
    "select_neighborhood",
    # changepoints
    "ChangepointPosterior",
    "ChangepointScreener",
    "CohortWeights",
    "FirmSeries",
    "MarginalTable",
    "Priors",
    "block_log_marginal",
    "changepoint_conditional",
    "filter_cohort",
    "gibbs_screen",
    "precompute_marginals",
    "sample_cohort_weights",
    "screen",
    # simulators
    "ContagionSim",
    "FirmSim",
    "chain_precision",
    "flip_edge",
    "simulate_contagion",
    "simulate_firms",
]
