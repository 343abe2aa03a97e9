"""Base policy, rollout decision engine, episode runner, policy evaluation,
and a brute-force schedule oracle for desk-scale validation.

The rollout policy scores each candidate first action by simulating the base
policy afterwards and picking the best estimated Q-value.  All randomness is
derived from an integer root seed through tagged SeedSequence keys, so every
stream is a pure function of (root, purpose, indices) and results do not
depend on execution order.
"""

from __future__ import annotations

import enum
import functools
import math
import weakref
from dataclasses import dataclass

import numpy as np

from .community import (
    Community,
    ComponentClass,
    DamageState,
    Network,
    benefit_for_damage,
    benefit_from_mask,
    fractions_from_mask,
    functional_mask,
)
from .errors import InstanceTooLarge, TerminalState, ValidationError
from .hazard import ComponentHazard, sample_initial_damage
from .mdp import (
    DrawSource,
    MdpConfig,
    Objective,
    RecoveryState,
    RepairAction,
    RepairModel,
    RepairWorkTable,
    WorkCursor,
    damaged_indices,
    enumerate_actions,
    initial_state,
    is_terminal,
    transition,
)

# stream tags; every rng in a run is keyed (root_seed, tag, *indices)
TAG_DAMAGE = 1
TAG_EPISODE_REPAIR = 2
TAG_ACTION_SAMPLING = 3
TAG_TRAJECTORY = 4

# relative width of the Q-value band treated as a tie between candidates
_TIE_BAND_REL = 1e-3

# deviation from the base action needs this many standard errors of evidence
_DEVIATION_Z = 2.0


def keyed_seed(root_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=[int(root_seed), *key])


class RolloutMode(enum.Enum):
    MEAN = "mean"
    WORST_CASE = "worst"


class PolicyKind(enum.Enum):
    BASE = "base"
    ROLLOUT = "rollout"


_EPN_CLASSES = frozenset(
    c for c in ComponentClass if c.network is Network.EPN
)
_WN_CLASSES = frozenset(c for c in ComponentClass if c.network is Network.WN)


@dataclass(frozen=True)
class PriorityBasePolicy:
    """Fixed expert ordering over component classes; within a class, lower
    component id first."""

    epn_priority: tuple[ComponentClass, ...] = (
        ComponentClass.TRANSMISSION_SEGMENT,
        ComponentClass.SUBSTATION,
        ComponentClass.DISTRIBUTION_SEGMENT,
    )
    wn_priority: tuple[ComponentClass, ...] = (
        ComponentClass.WELL,
        ComponentClass.WATER_TANK,
        ComponentClass.PUMPING_PLANT,
        ComponentClass.PIPELINE,
    )

    def __post_init__(self) -> None:
        if set(self.epn_priority) != _EPN_CLASSES or len(self.epn_priority) != 3:
            raise ValidationError(
                "epn_priority must list each electrical class exactly once"
            )
        if set(self.wn_priority) != _WN_CLASSES or len(self.wn_priority) != 4:
            raise ValidationError(
                "wn_priority must list each water class exactly once"
            )


@functools.lru_cache(maxsize=None)
def _rank_of(policy: PriorityBasePolicy) -> dict[ComponentClass, int]:
    ranks: dict[ComponentClass, int] = {}
    for order in (policy.epn_priority, policy.wn_priority):
        for rank, kind in enumerate(order):
            ranks[kind] = rank
    return ranks


# base actions depend only on (damage, crew counts, policy); trajectories
# revisit the same damage vectors constantly, so memoize per community
_base_action_memo: "weakref.WeakKeyDictionary[Community, dict]" = (
    weakref.WeakKeyDictionary()
)


def base_action(
    state: RecoveryState,
    community: Community,
    config: MdpConfig,
    policy: PriorityBasePolicy,
) -> RepairAction:
    """Assign each network's crews to its highest-priority damaged
    components."""
    memo = _base_action_memo.setdefault(community, {})
    key = (state.damage, config.n_e, config.n_w, policy)
    cached = memo.get(key)
    if cached is not None:
        return cached

    epn, wn = damaged_indices(state, community)
    if not epn and not wn:
        raise TerminalState("no damaged components; no base action exists")
    ranks = _rank_of(policy)
    comps = community.components

    def pick(indices: tuple[int, ...], budget: int) -> list[int]:
        ordered = sorted(indices, key=lambda i: (ranks[comps[i].kind], comps[i].id))
        return ordered[: min(budget, len(indices))]

    assign = [False] * community.n_components
    for i in pick(epn, config.n_e) + pick(wn, config.n_w):
        assign[i] = True
    action = RepairAction(assign=tuple(assign))
    memo[key] = action
    return action


@dataclass(frozen=True)
class RolloutConfig:
    """Lookahead and sampling knobs.  horizon=None means the number of
    initially damaged components, which keeps termination reachable inside
    the lookahead."""

    horizon: int | None = None
    n_mc_min: int = 32
    n_mc_max: int = 2048
    se_threshold: float = 0.05
    mode: RolloutMode = RolloutMode.MEAN
    action_cap: int = 500

    def __post_init__(self) -> None:
        if self.horizon is not None and self.horizon < 0:
            raise ValidationError("horizon must be >= 0")
        if self.n_mc_min < 1 or self.n_mc_max < self.n_mc_min:
            raise ValidationError("need 1 <= n_mc_min <= n_mc_max")
        if self.se_threshold <= 0.0:
            raise ValidationError("se_threshold must be > 0")
        if self.action_cap < 1:
            raise ValidationError("action_cap must be >= 1")


@dataclass(frozen=True)
class QEstimate:
    """value is the sample mean of returns, or in worst-case mode the
    smallest signed return (the longest time under the time objective,
    the lowest rate under the benefit objective).  returns keeps the raw
    per-trajectory values so callers can form paired comparisons across
    candidates that shared the same noise."""

    value: float
    std_error: float
    n_trajectories: int
    returns: tuple[float, ...] = ()


@dataclass(frozen=True)
class DecisionRecord:
    """Audit record for one rollout decision: every candidate with its
    estimate.  estimates is empty when only one action was admissible."""

    index: int
    elapsed_time: float
    chosen: RepairAction
    estimates: tuple[tuple[RepairAction, QEstimate], ...]


def trajectory_return(
    state: RecoveryState,
    first_action: RepairAction,
    base_policy: PriorityBasePolicy,
    mdp: MdpConfig,
    community: Community,
    horizon: int,
    draws: DrawSource,
) -> float:
    """Discounted return of forcing first_action now and following the base
    policy for up to horizon further steps, truncated at terminal states."""
    outcome = transition(state, first_action, community, mdp, draws)
    total = outcome.reward
    x = outcome.next_state
    disc = 1.0
    for _ in range(horizon):
        if is_terminal(x, community, mdp):
            break
        action = base_action(x, community, mdp, base_policy)
        outcome = transition(x, action, community, mdp, draws)
        disc *= mdp.gamma
        total += disc * outcome.reward
        x = outcome.next_state
    return total


def estimate_q(
    state: RecoveryState,
    action: RepairAction,
    base_policy: PriorityBasePolicy,
    rollout_config: RolloutConfig,
    mdp: MdpConfig,
    community: Community,
    horizon: int,
    draws_for_trajectory,
) -> QEstimate:
    """Monte-Carlo Q-estimate with adaptive sample size: batches of
    n_mc_min trajectories until the standard error of the mean drops below
    se_threshold or n_mc_max is reached.  draws_for_trajectory(j) supplies
    the noise for trajectory j; sharing those across candidate actions is
    what implements common random numbers.  A deterministic repair model
    needs a single trajectory."""
    if mdp.repair_model is RepairModel.REMAINING_WORK:
        value = trajectory_return(
            state, action, base_policy, mdp, community, horizon,
            draws_for_trajectory(0),
        )
        return QEstimate(
            value=value, std_error=0.0, n_trajectories=1, returns=(value,)
        )

    returns: list[float] = []
    while True:
        batch_end = min(
            len(returns) + rollout_config.n_mc_min, rollout_config.n_mc_max
        )
        for j in range(len(returns), batch_end):
            returns.append(
                trajectory_return(
                    state, action, base_policy, mdp, community, horizon,
                    draws_for_trajectory(j),
                )
            )
        n = len(returns)
        if n >= 2:
            se = float(np.std(returns, ddof=1)) / math.sqrt(n)
        else:
            se = math.inf
        if se < rollout_config.se_threshold or n >= rollout_config.n_mc_max:
            break
    if rollout_config.mode is RolloutMode.WORST_CASE:
        value = min(returns)
    else:
        value = float(np.mean(returns))
    return QEstimate(
        value=value, std_error=se, n_trajectories=n, returns=tuple(returns)
    )


def _paired_se(a: QEstimate, b: QEstimate, mode: RolloutMode) -> float:
    """Noise scale of the difference between two estimates whose trajectories
    shared noise tables index-by-index.  Mean mode: standard error of the
    paired mean difference, far tighter than the marginal errors under
    common random numbers.  Worst-case mode: the value is a minimum, whose
    difference is much noisier than the mean's, so use a paired bootstrap
    over the shared indices (fixed seed keeps decisions reproducible)."""
    m = min(len(a.returns), len(b.returns))
    if m < 2:
        return 0.0
    if mode is RolloutMode.WORST_CASE:
        av = np.asarray(a.returns[:m])
        bv = np.asarray(b.returns[:m])
        idx = np.random.default_rng(0).integers(0, m, size=(256, m))
        diffs = av[idx].min(axis=1) - bv[idx].min(axis=1)
        return float(np.std(diffs, ddof=1))
    diff = np.subtract(a.returns[:m], b.returns[:m])
    return float(np.std(diff, ddof=1)) / math.sqrt(m)


def rollout_decision(
    state: RecoveryState,
    base_policy: PriorityBasePolicy,
    rollout_config: RolloutConfig,
    mdp: MdpConfig,
    community: Community,
    root_seed: int,
    decision_index: int = 0,
    horizon: int | None = None,
) -> tuple[RepairAction, DecisionRecord]:
    """One-step lookahead: enumerate candidate actions, estimate Q for each
    under shared noise, return the argmax.  Ties go to the lexicographically
    smallest assignment vector."""
    if horizon is None:
        horizon = rollout_config.horizon
    if horizon is None:
        epn, wn = damaged_indices(state, community)
        horizon = len(epn) + len(wn)

    base = base_action(state, community, mdp, base_policy)
    action_rng = np.random.default_rng(
        keyed_seed(root_seed, TAG_ACTION_SAMPLING, decision_index)
    )
    candidates = enumerate_actions(
        state,
        community,
        mdp,
        cap=rollout_config.action_cap,
        rng=action_rng,
        must_include=base,
    )
    if len(candidates) == 1:
        record = DecisionRecord(
            index=decision_index,
            elapsed_time=state.elapsed_time,
            chosen=candidates[0],
            estimates=(),
        )
        return candidates[0], record

    tables: dict[int, RepairWorkTable] = {}

    def draws_for_trajectory(j: int) -> WorkCursor:
        table = tables.get(j)
        if table is None:
            table = RepairWorkTable(
                keyed_seed(root_seed, TAG_TRAJECTORY, decision_index, j),
                community.n_components,
            )
            tables[j] = table
        return table.cursor()

    scored: list[tuple[RepairAction, QEstimate]] = []
    base_est: QEstimate | None = None
    for action in candidates:
        est = estimate_q(
            state, action, base_policy, rollout_config, mdp, community,
            horizon, draws_for_trajectory,
        )
        scored.append((action, est))
        if action == base:
            base_est = est
    # Deviating from the base action requires evidence above the estimator
    # noise, else Monte-Carlo flutter would erode the not-worse guarantee.
    # Noise is the paired standard error against the base estimate (the
    # candidates shared their trajectory tables), plus a resolution band;
    # within the band, ties go to the lexicographically smallest vector.
    top_action, top_est = max(scored, key=lambda pair: pair[1].value)
    top = top_est.value
    band = _TIE_BAND_REL * max(1.0, abs(top))
    noise = (
        _paired_se(top_est, base_est, rollout_config.mode)
        if base_est is not None
        else 0.0
    )
    if base_est is not None and top - base_est.value <= band + _DEVIATION_Z * noise:
        best_action = base
    else:
        tied = [(action, est) for action, est in scored if est.value >= top - band]
        best_action, _ = min(tied, key=lambda pair: pair[0].assign)
    record = DecisionRecord(
        index=decision_index,
        elapsed_time=state.elapsed_time,
        chosen=best_action,
        estimates=tuple(scored),
    )
    return best_action, record


@dataclass(frozen=True)
class RestorationCurve:
    """Step-function history of (time_days, benefitted_persons, epn_frac,
    wn_frac), one point per decision epoch starting at time zero."""

    points: tuple[tuple[float, float, float, float], ...]

    def __post_init__(self) -> None:
        times = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("curve times must strictly increase")

    @property
    def total_time(self) -> float:
        return self.points[-1][0] if self.points else 0.0

    def area(self) -> float:
        """Integral of benefitted persons over time (step function, left
        value holds until the next point)."""
        total = 0.0
        for (t0, b0, _, _), (t1, _, _, _) in zip(self.points, self.points[1:]):
            total += b0 * (t1 - t0)
        return total

    def benefit_rate(self) -> float:
        """Area divided by total time; for a zero-length episode, the
        constant initial benefit."""
        if self.total_time == 0.0:
            return self.points[0][1] if self.points else 0.0
        return self.area() / self.total_time


@dataclass(frozen=True)
class StepRecord:
    decision_index: int
    time_days: float
    assigned: tuple[int, ...]
    repaired: tuple[int, ...]
    reward: float


@dataclass(frozen=True)
class EpisodeResult:
    curve: RestorationCurve
    total_time: float
    steps: tuple[StepRecord, ...]
    decisions: tuple[DecisionRecord, ...]
    # first time each retailer had both utilities; inf if never during
    # the episode (possible under the coverage objective)
    retailer_recovery: tuple[float, ...]

    def metric(self, objective: Objective) -> float:
        if objective is Objective.MIN_TIME_TO_COVERAGE:
            return self.total_time
        return self.curve.benefit_rate()


def _observe(
    community: Community,
    state: RecoveryState,
    retailer_recovery: list[float],
) -> tuple[float, float, float, float]:
    """Curve point for the state; also backfills retailer recovery times."""
    mask = functional_mask(community, state.damage)
    for ri in range(len(community.retailers)):
        if retailer_recovery[ri] == math.inf and (
            mask[community.ret_power_idx[ri]] and mask[community.ret_water_idx[ri]]
        ):
            retailer_recovery[ri] = state.elapsed_time
    epn_frac, wn_frac = fractions_from_mask(community, mask)
    return (
        state.elapsed_time,
        benefit_from_mask(community, mask),
        epn_frac,
        wn_frac,
    )


def run_episode(
    policy: PolicyKind,
    damage: tuple[DamageState, ...],
    community: Community,
    mdp: MdpConfig,
    rollout_config: RolloutConfig,
    base_policy: PriorityBasePolicy,
    root_seed: int,
    episode_index: int = 0,
) -> EpisodeResult:
    """Run one episode to termination.  Repair noise comes from a per-episode
    draw table keyed only by (root_seed, episode_index), so base and rollout
    runs of the same episode face identical repair-time randomness."""
    state = initial_state(community, damage, mdp)
    table = RepairWorkTable(
        keyed_seed(root_seed, TAG_EPISODE_REPAIR, episode_index),
        community.n_components,
    )
    env_draws = table.cursor()
    epn0, wn0 = damaged_indices(state, community)
    horizon = rollout_config.horizon
    if horizon is None:
        horizon = len(epn0) + len(wn0)

    retailer_recovery = [math.inf] * len(community.retailers)
    points = [_observe(community, state, retailer_recovery)]
    steps: list[StepRecord] = []
    decisions: list[DecisionRecord] = []
    k = 0
    while not is_terminal(state, community, mdp):
        if policy is PolicyKind.BASE:
            action = base_action(state, community, mdp, base_policy)
        else:
            action, record = rollout_decision(
                state, base_policy, rollout_config, mdp, community,
                root_seed=root_seed,
                decision_index=episode_index * 10_000 + k,
                horizon=horizon,
            )
            decisions.append(record)
        outcome = transition(state, action, community, mdp, env_draws)
        state = outcome.next_state
        points.append(_observe(community, state, retailer_recovery))
        steps.append(
            StepRecord(
                decision_index=k,
                time_days=state.elapsed_time,
                assigned=tuple(
                    community.components[i].id for i in action.assigned_indices()
                ),
                repaired=tuple(sorted(outcome.repaired)),
                reward=outcome.reward,
            )
        )
        k += 1
    return EpisodeResult(
        curve=RestorationCurve(points=tuple(points)),
        total_time=state.elapsed_time,
        steps=tuple(steps),
        decisions=tuple(decisions),
        retailer_recovery=tuple(retailer_recovery),
    )


def evaluate_policy(
    policy: PolicyKind,
    community: Community,
    hazards: dict[int, ComponentHazard],
    mdp: MdpConfig,
    rollout_config: RolloutConfig,
    base_policy: PriorityBasePolicy,
    n_episodes: int,
    root_seed: int,
) -> tuple[float, float, list[float]]:
    """Mean episode metric with its standard error across independently
    sampled initial damages.  Episode index keys both the damage draw and
    the repair noise, so calling this for base and rollout with the same
    seed gives paired episodes."""
    if n_episodes < 2:
        raise ValidationError("need at least 2 episodes for a standard error")
    metrics: list[float] = []
    for ep in range(n_episodes):
        damage_rng = np.random.default_rng(keyed_seed(root_seed, TAG_DAMAGE, ep))
        damage = sample_initial_damage(community, hazards, damage_rng)
        result = run_episode(
            policy, damage, community, mdp, rollout_config, base_policy,
            root_seed=root_seed, episode_index=ep,
        )
        metrics.append(result.metric(mdp.objective))
    mean = float(np.mean(metrics))
    stderr = float(np.std(metrics, ddof=1)) / math.sqrt(n_episodes)
    return mean, stderr, metrics


_ORACLE_MAX_DAMAGED = 8
_ORACLE_MAX_SCHEDULES = 1_000_000


def exhaustive_oracle(
    damage: tuple[DamageState, ...],
    community: Community,
    mdp: MdpConfig,
) -> tuple[float, RepairAction]:
    """Exact optimum over every preemptive schedule by depth-first search.
    Deterministic repair model only; guarded to desk scale.  Returns the
    natural objective value (days for the time objective, persons per day
    for the benefit objective) and an optimal first action."""
    if mdp.repair_model is not RepairModel.REMAINING_WORK:
        raise ValidationError("oracle needs the deterministic repair model")
    n_damaged = sum(1 for d in damage if d != DamageState.NONE)
    if n_damaged > _ORACLE_MAX_DAMAGED:
        raise InstanceTooLarge(
            f"{n_damaged} damaged components exceed the oracle bound "
            f"{_ORACLE_MAX_DAMAGED}"
        )
    minimize = mdp.objective is Objective.MIN_TIME_TO_COVERAGE
    sign = 1.0 if minimize else -1.0
    visited = [0]

    def search(state: RecoveryState, area: float) -> tuple[float, RepairAction | None]:
        if is_terminal(state, community, mdp):
            if minimize:
                return state.elapsed_time, None
            if state.elapsed_time == 0.0:
                return benefit_for_damage(community, state.damage), None
            return area / state.elapsed_time, None
        best = math.inf * sign
        best_action: RepairAction | None = None
        actions = enumerate_actions(
            state, community, mdp, cap=_ORACLE_MAX_SCHEDULES
        )
        benefit_now = benefit_for_damage(community, state.damage)
        for action in actions:
            visited[0] += 1
            if visited[0] > _ORACLE_MAX_SCHEDULES:
                raise InstanceTooLarge(
                    "schedule enumeration exceeded the oracle bound"
                )
            outcome = transition(state, action, community, mdp, _NO_DRAWS)
            value, _ = search(
                outcome.next_state, area + benefit_now * outcome.completion_time
            )
            if sign * value < sign * best or (
                value == best
                and best_action is not None
                and action.assign < best_action.assign
            ):
                best = value
                best_action = action
        assert best_action is not None
        return best, best_action

    value, first = search(initial_state(community, damage, mdp), 0.0)
    if first is None:
        raise TerminalState("initial state is already terminal")
    return value, first


class _NoDraws(DrawSource):
    def remaining_unit(self, component_index: int) -> float:
        raise AssertionError("deterministic mode must not draw repair noise")

    def consume_unit(self, component_index: int, used: float) -> None:
        raise AssertionError("deterministic mode must not draw repair noise")


_NO_DRAWS = _NoDraws()
