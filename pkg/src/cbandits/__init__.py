"""Constrained epsilon-greedy bandits: simulation, exact analysis, bounds."""

from cbandits.core import (
    Arm,
    Bernoulli,
    Beta,
    Discrete,
    PointMass,
    ProblemInstance,
    UniformSource,
    ValidationError,
    distribution_from_config,
    instance_from_config,
    trial_stream,
)
from cbandits.strategies import (
    ConstantSchedule,
    EpsilonSchedule,
    ExplicitSchedule,
    InverseTimeSchedule,
    SelectionEvent,
    StrategyState,
    schedule_from_config,
    select_arm,
    simulate,
)
from cbandits.analysis import (
    FeasibilityProfile,
    OracleResult,
    constraint_margin,
    delta_best_arms,
    exact_selection_probability,
    feasibility_profile,
    feasible_set,
    optimal_feasible_arms,
    reward_separation,
)
from cbandits.bounds import (
    BoundReport,
    ClosedFormReport,
    bernstein_tail,
    closed_form_lower_bound,
    exploration_mass,
    hoeffding_tail,
    selection_lower_bound,
)
from cbandits.harness import (
    ExperimentConfig,
    ExperimentResult,
    MonteCarloEstimate,
    TrialRecord,
    regret_metric,
    run_experiment,
    run_trial,
    wilson_interval,
)

__version__ = "0.1.0"
