"""Equilibrium routing for multi-team traffic games under a log-population tax."""

from .dynamics import (
    BestResponse,
    CostReport,
    best_response,
    evaluate_cost,
    exploitability,
    propagate,
    spatial_entropy,
)
from .model import (
    DensityTrajectory,
    GameSpec,
    InfiniteCost,
    MFRouteError,
    NonFiniteIntermediate,
    PolicyProfile,
    SingularInteraction,
    SolverArtifacts,
    SupportViolation,
    TaxField,
    TrafficGraph,
    Violation,
    validate_spec,
)
from .scenarios import GridWorld, ParseError, ValidationError, build_grid_spec, load_spec, save_spec
from .sim import (
    PopulationCounts,
    SimulationReport,
    empirical_tax,
    estimate_epsilon,
    estimate_expected_tax,
    simulate,
)
from .solver import mean_field_tax, solve, stationarity_residual, value_function

__version__ = "0.1.0"
