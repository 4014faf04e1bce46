"""Low-communication majority consensus in the population-protocol model.

A count-based seeded simulator of the leader/follower gossip protocol,
a fixed-step integrator of its mean-field limit, potential-function
analysis of the trajectory phases, and a coupling/verification harness
comparing the two systems.
"""

from .population import (
    AgentCounts,
    ProtocolParams,
    StepOutcome,
    WakeClass,
    apply_wake,
    consensus_reached,
    init_population,
)
from .meanfield import (
    AdvantageView,
    DomainError,
    DomainExitError,
    MeanFieldState,
    advantages,
    initial_state,
    integrate,
    rhs,
    state_from_counts,
)
from .simulator import (
    TrialResult,
    poisson_time_of,
    run_ensemble,
    run_trial,
    splitmix64,
    three_state_baseline,
)
from .potentials import (
    BoundReport,
    PotentialParams,
    check_bounds,
    detect_T1,
    fit_decay_rate,
    lambda2,
    lambda3,
    phi,
    psi,
)
from .coupling import BlockReport, DeviationReport, compare, reset_experiment
from .traceio import TrajectoryTrace, read_trace, write_trace

__version__ = "0.1.0"
