"""Distributional barycenters of conditional samples via penalized gradient flows.

Given sample points x_i with covariates z_i, the solver moves mapped copies
y_i so that the conditional distributions of y given z collapse onto a
single barycenter distribution while a configurable transport cost from x to
y stays minimal.  The matching constraint is scored either by conditional
kernel density estimates or by polynomial feature averages, contracted
against a precomputed bi-stochastic covariate coupling; a penalty schedule
drives the constraint multiplier.
"""

__version__ = "0.1.0"

from .costs import CostModel, cost_grad, cost_hessian_blocks, cost_value, parse_cost_spec
from .couplings import (
    Covariates,
    CouplingMatrices,
    build_couplings,
    categorical_coupling,
    centering_matrix,
    gaussian_kernel,
    kernel_matrix,
    median_heuristic_bandwidth,
    sinkhorn_bistochastic,
)
from .datagen import (
    Dataset,
    TimeSeriesSample,
    cart2sph,
    gen_ellipses,
    gen_hidden_signal,
    gen_sphere_patches,
    image_to_pointcloud,
    lagged_dataset,
    sph2cart,
)
from .errors import BaryflowError, ConvergenceError, InvalidInputError, NumericError
from .objective import (
    ObjectiveEval,
    TestFunctionSpec,
    evaluate,
    lf_features,
    lf_kde,
    monomial_features,
)
from .solver import (
    BarycenterResult,
    SolverConfig,
    descent_check,
    lambda_update,
    precondition_mean_shift,
    solve,
    step_explicit,
    step_implicit,
)

__all__ = [
    "BarycenterResult",
    "BaryflowError",
    "ConvergenceError",
    "CostModel",
    "CouplingMatrices",
    "Covariates",
    "Dataset",
    "InvalidInputError",
    "NumericError",
    "ObjectiveEval",
    "SolverConfig",
    "TestFunctionSpec",
    "TimeSeriesSample",
    "__version__",
    "build_couplings",
    "cart2sph",
    "categorical_coupling",
    "centering_matrix",
    "cost_grad",
    "cost_hessian_blocks",
    "cost_value",
    "descent_check",
    "evaluate",
    "gaussian_kernel",
    "gen_ellipses",
    "gen_hidden_signal",
    "gen_sphere_patches",
    "image_to_pointcloud",
    "kernel_matrix",
    "lagged_dataset",
    "lambda_update",
    "lf_features",
    "lf_kde",
    "median_heuristic_bandwidth",
    "monomial_features",
    "parse_cost_spec",
    "precondition_mean_shift",
    "sinkhorn_bistochastic",
    "solve",
    "sph2cart",
    "step_explicit",
    "step_implicit",
]
