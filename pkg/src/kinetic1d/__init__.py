"""Simulation and Monte Carlo verification for a force-driven tracer in a 1D random medium."""
from .decomposition import (
    AEventResult,
    DecompositionReport,
    TheoryConstants,
    check_A_event,
    compute_R_split,
    compute_X,
    decompose,
    theory_constants,
)
from .environment import Environment, GapDistSpec, moments, sample_environment
from .errors import (
    ConfigError,
    ConsistencyError,
    InsufficientDataError,
    InvalidInputError,
    Kinetic1DError,
    NoApproachError,
)
from .exact import (
    CouplingReport,
    MovingNeutral,
    RecollisionEvent,
    TrajectoryRecord,
    coupling_report,
    next_event,
    prune_or_reinstate,
    simulate_exact,
)
from .harness import ExperimentConfig, parse_config, run_experiment
from .model import (
    CollisionOutcome,
    ModelParams,
    TracerState,
    catch_up_time,
    flight_time,
    resolve_elastic,
    resolve_sticky,
    torricelli_velocity,
)
from .modified import ModifiedTrajectory, simulate_modified, v2_product_form
from .stats import NormalityResult, SampleSummary, ks_normal, qq_export, summarize

__version__ = "0.1.0"
