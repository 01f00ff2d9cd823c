# ABOUTME: rwre_lab - Monte Carlo lab for independent random walks in an i.i.d. random environment.
# ABOUTME: Environments, walks, particle systems, couplings and the estimators built on them.

from rwre_lab.errors import (
    RWREError,
    SpecError,
    AssumptionViolation,
    DepthExceeded,
    WindowTooSmall,
    WindowMismatch,
    ParityError,
    DegenerateEstimate,
    InsufficientSamples,
)
from rwre_lab.window import Window
from rwre_lab.rng import SeedMode, SeedPolicy
from rwre_lab.environment import (
    Environment,
    EnvironmentSpec,
    ModelInvariants,
    PotentialWindow,
    TwoPoint,
    Discrete,
    TruncatedContinuous,
    two_point,
    discrete,
    omega_at,
    mean_rho,
    compute_invariants,
    compute_f,
)
from rwre_lab.walker import (
    WalkResult,
    HittingResult,
    run_walk,
    run_walks,
    hitting_time,
    backtrack_tail,
)
from rwre_lab.particles import (
    Configuration,
    DeterministicConstant,
    PoissonConstant,
    StationaryPoisson,
    QuantileProduct,
    Indicator,
    PiecewiseLinear,
    triangle,
    sample_initial,
    evolve,
    empirical_pairing,
    synthesize_profile_config,
)
from rwre_lab.coupling import (
    CoupledConfiguration,
    MeetingOutcome,
    couple_initial,
    coupled_step,
    coupled_evolve,
    discrepancy_decay,
    meeting_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "RWREError",
    "SpecError",
    "AssumptionViolation",
    "DepthExceeded",
    "WindowTooSmall",
    "WindowMismatch",
    "ParityError",
    "DegenerateEstimate",
    "InsufficientSamples",
    "Window",
    "SeedMode",
    "SeedPolicy",
    "Environment",
    "EnvironmentSpec",
    "ModelInvariants",
    "PotentialWindow",
    "TwoPoint",
    "Discrete",
    "TruncatedContinuous",
    "two_point",
    "discrete",
    "omega_at",
    "mean_rho",
    "compute_invariants",
    "compute_f",
    "WalkResult",
    "HittingResult",
    "run_walk",
    "run_walks",
    "hitting_time",
    "backtrack_tail",
    "Configuration",
    "DeterministicConstant",
    "PoissonConstant",
    "StationaryPoisson",
    "QuantileProduct",
    "Indicator",
    "PiecewiseLinear",
    "triangle",
    "sample_initial",
    "evolve",
    "empirical_pairing",
    "synthesize_profile_config",
    "CoupledConfiguration",
    "MeetingOutcome",
    "couple_initial",
    "coupled_step",
    "coupled_evolve",
    "discrepancy_decay",
    "meeting_experiment",
    "estimators",
]

from rwre_lab import estimators
