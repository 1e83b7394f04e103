"""Optimal-transport tests for linear relations among discrete distributions."""

from ._version import __version__
from .barycenter import BarycenterSolution, psi_limit_functional, solve_barycenter
from .design import (
    ContrastMatrix,
    DesignSpec,
    delta_hat,
    factorial_contrasts,
    one_way_contrasts,
    parse_design,
    rho,
)
from .errors import (
    ConvergenceError,
    DesignError,
    FDOTTError,
    InputError,
    SolverError,
    SupportMismatchError,
    UnbalancedError,
)
from .inference import (
    LimitSampleSet,
    LocalAlternative,
    TestReport,
    bary_statistic,
    fdott_statistic,
    local_power,
    p_value,
    quantile,
    run_test,
    sample_alternative_limit,
    sample_gaussian,
    sample_local_limit,
    sample_null_limit,
)
from .measures import (
    CostMatrix,
    GroupSamples,
    NonNegMeasure,
    ProbMeasure,
    SignedMeasure,
    empirical_measure,
    gaussian_factor,
    grid_euclidean_cost,
    multinomial_sigma,
)
from .ot_core import (
    DualDirection,
    OTSolution,
    dual_face_maximize,
    signed_ot,
    signed_ot_rows,
    solve_ot,
    uv_maps,
)
from .posthoc import PosthocReport, tukey_hsd

__all__ = [
    "__version__",
    "BarycenterSolution",
    "ContrastMatrix",
    "ConvergenceError",
    "CostMatrix",
    "DesignError",
    "DesignSpec",
    "DualDirection",
    "FDOTTError",
    "GroupSamples",
    "InputError",
    "LimitSampleSet",
    "LocalAlternative",
    "NonNegMeasure",
    "OTSolution",
    "PosthocReport",
    "ProbMeasure",
    "SignedMeasure",
    "SolverError",
    "SupportMismatchError",
    "TestReport",
    "UnbalancedError",
    "bary_statistic",
    "delta_hat",
    "dual_face_maximize",
    "empirical_measure",
    "factorial_contrasts",
    "fdott_statistic",
    "gaussian_factor",
    "grid_euclidean_cost",
    "local_power",
    "multinomial_sigma",
    "one_way_contrasts",
    "p_value",
    "parse_design",
    "psi_limit_functional",
    "quantile",
    "rho",
    "run_test",
    "sample_alternative_limit",
    "sample_gaussian",
    "sample_local_limit",
    "sample_null_limit",
    "signed_ot",
    "signed_ot_rows",
    "solve_barycenter",
    "solve_ot",
    "tukey_hsd",
    "uv_maps",
]
