"""Exponential moments of Markov-chain local times via renewal equations.

The library computes Z(t) = E[exp(gamma L_t)] for the local time L_t of a
continuous-time Markov chain at a distinguished state, classifies the growth
regime against the Green-function threshold, produces the sharp long-time
asymptotics in each regime, and cross-checks everything against closed forms,
a convolution-series solver, a lattice torus integral, and Monte Carlo.
"""

from .asymptotics import (
    AsymptoticsReport,
    LaplaceEvaluator,
    RateCurve,
    classify,
    green_function,
    growth_rate,
    hitting_moment,
    laplace,
    rate_curve,
    srw_torus_rate,
    torus_green,
    truncated_mean,
    truncated_mean_profile,
    write_rate_curve_csv,
    write_report,
)
from .errors import NumericalError, PreconditionError
from .kernels import (
    CLOSED_FORM_FAMILIES,
    ConstantOne,
    ConstantTail,
    CtmcKernel,
    ExponentialTail,
    GeneratorMatrix,
    LocalTimeSimulator,
    PolyTail,
    PolynomialTail,
    PureEscape,
    TabulatedKernel,
    TwoState,
    build_difference_walk,
    evaluate_kernel,
    generator_to_json,
    load_generator,
    load_tabulated,
    simulate_local_time,
)
from .montecarlo import CompareResult, McConfig, McEstimate, compare, estimate, write_estimate_csv
from .renewal import (
    RenewalProblem,
    RenewalSolution,
    read_solution_csv,
    refine,
    solve,
    solve_by_series,
    write_solution_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticsReport", "LaplaceEvaluator", "RateCurve", "classify",
    "green_function", "growth_rate", "hitting_moment", "laplace", "rate_curve",
    "srw_torus_rate", "torus_green", "truncated_mean", "truncated_mean_profile",
    "write_rate_curve_csv", "write_report",
    "NumericalError", "PreconditionError",
    "CLOSED_FORM_FAMILIES", "ConstantOne", "ConstantTail", "CtmcKernel",
    "ExponentialTail", "GeneratorMatrix", "LocalTimeSimulator", "PolyTail",
    "PolynomialTail", "PureEscape", "TabulatedKernel", "TwoState",
    "build_difference_walk", "evaluate_kernel", "generator_to_json",
    "load_generator", "load_tabulated", "simulate_local_time",
    "CompareResult", "McConfig", "McEstimate", "compare", "estimate",
    "write_estimate_csv",
    "RenewalProblem", "RenewalSolution", "read_solution_csv", "refine",
    "solve", "solve_by_series", "write_solution_csv",
    "__version__",
]
