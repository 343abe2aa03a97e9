"""Rollout planning for post-hazard restoration of interdependent power
and water networks."""

from .community import (
    Community,
    Component,
    ComponentClass,
    DamageState,
    DependencyGraph,
    GridCell,
    Network,
    Retailer,
    ServiceStatus,
    benefit_count,
    build_community,
    functional_set,
    gravity_weights,
    service_status,
)
from .hazard import (
    ComponentHazard,
    FragilityCurve,
    FragilitySet,
    damage_pmf,
    exceedance_prob,
    sample_initial_damage,
)
from .mdp import (
    MdpConfig,
    Objective,
    RecoveryState,
    RepairAction,
    RepairModel,
    TransitionOutcome,
    count_admissible,
    coverage_fraction,
    enumerate_actions,
    initial_state,
    is_terminal,
    step,
)
from .planner import (
    DecisionRecord,
    EpisodeResult,
    PolicyKind,
    PriorityBasePolicy,
    QEstimate,
    RestorationCurve,
    RolloutConfig,
    RolloutMode,
    base_action,
    estimate_q,
    evaluate_policy,
    exhaustive_oracle,
    rollout_decision,
    run_episode,
)
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"
