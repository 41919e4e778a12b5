"""Simulation and verification lab for perturbed inertial primal-dual dynamics."""

from pdflow.errors import (
    ConfigurationError,
    DegenerateProblemError,
    DivergenceError,
    DomainError,
    NumericalError,
    PdflowError,
    RejectedInputError,
    ResolutionError,
    StiffnessError,
)
from pdflow.problem import (
    LogSumExpProblem,
    Problem,
    QuadraticProblem,
    augmented_lagrangian,
    ergodic_average,
    kkt_solve,
    lagrangian,
    residuals,
)
from pdflow.schedule import Regime, Schedule, classify
from pdflow.dynamics import (
    PhaseState,
    SamplePlan,
    Trajectory,
    integrate,
    rhs,
    time_rescale_map,
    verify_rescaling_equivalence,
)
from pdflow.lyapunov import (
    EnergyConfig,
    check_appendix_conditions,
    check_decrease_inequality,
    energy_eps_trace,
    theta_eta_for_regime,
)
from pdflow.rates import WindowPolicy, compare_to_catalog, fit_rate, fit_rate_scaled
from pdflow.catalog import CATALOG, RateCatalogEntry
from pdflow.scenario import Scenario, load_scenario, parse_scenario

__version__ = "0.1.0"

__all__ = [
    "augmented_lagrangian",
    "CATALOG",
    "check_appendix_conditions",
    "check_decrease_inequality",
    "classify",
    "compare_to_catalog",
    "ConfigurationError",
    "DegenerateProblemError",
    "DivergenceError",
    "DomainError",
    "energy_eps_trace",
    "EnergyConfig",
    "ergodic_average",
    "fit_rate",
    "fit_rate_scaled",
    "integrate",
    "kkt_solve",
    "lagrangian",
    "load_scenario",
    "LogSumExpProblem",
    "NumericalError",
    "parse_scenario",
    "PdflowError",
    "PhaseState",
    "Problem",
    "QuadraticProblem",
    "RateCatalogEntry",
    "Regime",
    "RejectedInputError",
    "residuals",
    "ResolutionError",
    "rhs",
    "SamplePlan",
    "Scenario",
    "Schedule",
    "StiffnessError",
    "theta_eta_for_regime",
    "time_rescale_map",
    "Trajectory",
    "verify_rescaling_equivalence",
    "WindowPolicy",
]
