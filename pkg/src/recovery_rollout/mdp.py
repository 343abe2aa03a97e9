"""Recovery MDP: states, repair actions, and the stochastic transition
simulator.

A state is the damage vector plus elapsed time.  An action assigns each
network's repair crews to damaged components of that network.  A step draws
repair times, advances time to the first completion, repairs that component,
and pays a reward that depends on the configured objective.  Scheduling is
preemptive: crews are reassigned from scratch at every decision epoch, which
is lossless for exponential repair times.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .community import (
    Community,
    DamageState,
    Network,
    benefit_for_damage_cached,
)
from .errors import (
    InadmissibleAction,
    TerminalState,
    ValidationError,
    ZeroElapsedTime,
    ZeroPopulation,
)


class Objective(enum.Enum):
    # reach the coverage threshold as fast as possible
    MIN_TIME_TO_COVERAGE = "min_time_to_coverage"
    # maximize benefitted persons per day over the full recovery
    MAX_BENEFIT_RATE = "max_benefit_rate"


class RepairModel(enum.Enum):
    EXPONENTIAL = "exponential"
    REMAINING_WORK = "remaining_work"


@dataclass(frozen=True)
class MdpConfig:
    n_e: int
    n_w: int
    gamma: float = 0.99
    objective: Objective = Objective.MIN_TIME_TO_COVERAGE
    alpha: float = 0.8
    repair_model: RepairModel = RepairModel.EXPONENTIAL

    def __post_init__(self) -> None:
        if self.n_e < 1 or self.n_w < 1:
            raise ValidationError("each network needs at least one repair crew")
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError("gamma must be in (0, 1]")
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError("alpha must be in (0, 1]")


@dataclass(frozen=True)
class RecoveryState:
    """Damage per component (community index order), elapsed days, and, in
    remaining-work mode, outstanding repair effort per component."""

    damage: tuple[DamageState, ...]
    elapsed_time: float = 0.0
    remaining_work: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.elapsed_time < 0.0:
            raise ValidationError("elapsed_time must be >= 0")
        if self.remaining_work is not None:
            if len(self.remaining_work) != len(self.damage):
                raise ValidationError("remaining_work length must match damage")
            for state, work in zip(self.damage, self.remaining_work):
                if work < 0.0:
                    raise ValidationError("remaining_work entries must be >= 0")
                if state != DamageState.NONE and work == 0.0:
                    raise ValidationError(
                        "damaged components need positive remaining_work"
                    )


@dataclass(frozen=True)
class RepairAction:
    """Crew assignment as a boolean per component; true only at damaged
    components, with each network's count equal to min(crews, damaged)."""

    assign: tuple[bool, ...]

    def assigned_indices(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.assign) if a)


@dataclass(frozen=True)
class TransitionOutcome:
    next_state: RecoveryState
    completion_time: float
    repaired: frozenset[int]
    reward: float


class DrawSource:
    """Supplies each component's outstanding repair requirement in
    unit-mean-exponential units and records progress on it.

    For exponential repair times, tracking remaining requirement across
    epochs is distributionally identical to redrawing fresh times after
    every preemption (memorylessness), but it lets two simulations that
    share a draw table face exactly the same repair workloads, which is
    what makes paired comparisons low-variance."""

    def remaining_unit(self, component_index: int) -> float:
        raise NotImplementedError

    def consume_unit(self, component_index: int, used: float) -> None:
        raise NotImplementedError


class FreshDraws(DrawSource):
    """Memoryless form: every query redraws, progress is discarded.  The
    per-step law is the same as the work-tracking form."""

    def __init__(self, rng: np.random.Generator) -> None:
        self.rng = rng

    def remaining_unit(self, component_index: int) -> float:
        return float(self.rng.standard_exponential())

    def consume_unit(self, component_index: int, used: float) -> None:
        pass


class RepairWorkTable:
    """One unit-exponential work requirement per component, drawn up front
    from a seeded stream.  Every cursor replays the same requirements."""

    def __init__(self, seed_seq: np.random.SeedSequence, n_components: int) -> None:
        rng = np.random.default_rng(seed_seq)
        self.draws = rng.standard_exponential(n_components)

    def cursor(self) -> "WorkCursor":
        return WorkCursor(self)


class WorkCursor(DrawSource):
    def __init__(self, table: RepairWorkTable) -> None:
        self.remaining = table.draws.copy()

    def remaining_unit(self, component_index: int) -> float:
        return float(self.remaining[component_index])

    def consume_unit(self, component_index: int, used: float) -> None:
        self.remaining[component_index] -= used


def initial_state(
    community: Community,
    damage: tuple[DamageState, ...],
    config: MdpConfig,
) -> RecoveryState:
    """State at time zero; in remaining-work mode each damaged component
    starts with its full expected repair effort outstanding."""
    if len(damage) != community.n_components:
        raise ValidationError("damage vector length must match component count")
    remaining: tuple[float, ...] | None = None
    if config.repair_model is RepairModel.REMAINING_WORK:
        remaining = tuple(
            community.repair_means[i][int(damage[i])]
            if damage[i] != DamageState.NONE
            else 0.0
            for i in range(community.n_components)
        )
    return RecoveryState(damage=tuple(damage), remaining_work=remaining)


def damaged_indices(
    state: RecoveryState, community: Community
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """(EPN, WN) indices of currently damaged components, ascending."""
    epn = tuple(
        i for i in community.epn_indices if state.damage[i] != DamageState.NONE
    )
    wn = tuple(i for i in community.wn_indices if state.damage[i] != DamageState.NONE)
    return epn, wn


def count_admissible(
    state: RecoveryState, community: Community, config: MdpConfig
) -> int:
    """Number of admissible crew assignments, the product of per-network
    k-subset counts."""
    epn, wn = damaged_indices(state, community)
    return math.comb(len(epn), min(config.n_e, len(epn))) * math.comb(
        len(wn), min(config.n_w, len(wn))
    )


def action_from_indices(n_components: int, indices: tuple[int, ...]) -> RepairAction:
    assign = [False] * n_components
    for i in indices:
        assign[i] = True
    return RepairAction(assign=tuple(assign))


def check_admissible(
    state: RecoveryState,
    action: RepairAction,
    community: Community,
    config: MdpConfig,
) -> None:
    """Raises InadmissibleAction unless the action is valid in this state."""
    if len(action.assign) != community.n_components:
        raise InadmissibleAction("assignment length must match component count")
    damage = state.damage
    network_of = community.network_of
    l_e = l_w = n_epn = n_wn = 0
    for i, assigned in enumerate(action.assign):
        is_epn = network_of[i] is Network.EPN
        if damage[i] != DamageState.NONE:
            if is_epn:
                l_e += 1
                n_epn += assigned
            else:
                l_w += 1
                n_wn += assigned
        elif assigned:
            raise InadmissibleAction(
                f"component {community.components[i].id} is not damaged"
            )
    if l_e == 0 and l_w == 0:
        raise InadmissibleAction("state is terminal; no admissible action exists")
    want_e = min(config.n_e, l_e)
    want_w = min(config.n_w, l_w)
    if n_epn != want_e or n_wn != want_w:
        raise InadmissibleAction(
            f"assignment uses ({n_epn}, {n_wn}) crews, expected ({want_e}, {want_w})"
        )


def enumerate_actions(
    state: RecoveryState,
    community: Community,
    config: MdpConfig,
    cap: int = 500,
    rng: np.random.Generator | None = None,
    must_include: RepairAction | None = None,
) -> list[RepairAction]:
    """All admissible actions when their count fits under cap, otherwise cap
    distinct uniform samples that always include must_include (the base
    action).  Deterministic given the rng seed."""
    epn, wn = damaged_indices(state, community)
    if not epn and not wn:
        raise TerminalState("no damaged components; nothing to assign")
    k_e = min(config.n_e, len(epn))
    k_w = min(config.n_w, len(wn))
    total = math.comb(len(epn), k_e) * math.comb(len(wn), k_w)
    n = community.n_components

    if total <= cap:
        actions = [
            action_from_indices(n, e_sub + w_sub)
            for e_sub in itertools.combinations(epn, k_e)
            for w_sub in itertools.combinations(wn, k_w)
        ]
        return actions

    if rng is None:
        raise ValidationError(
            f"{total} admissible actions exceed cap {cap}; an rng is required "
            "for sampling"
        )
    chosen: list[RepairAction] = []
    seen: set[tuple[int, ...]] = set()
    if must_include is not None:
        chosen.append(must_include)
        seen.add(must_include.assigned_indices())
    while len(chosen) < cap:
        e_sub = tuple(sorted(rng.choice(len(epn), size=k_e, replace=False)))
        w_sub = tuple(sorted(rng.choice(len(wn), size=k_w, replace=False)))
        indices = tuple(epn[i] for i in e_sub) + tuple(wn[i] for i in w_sub)
        if indices in seen:
            continue
        seen.add(indices)
        chosen.append(action_from_indices(n, indices))
    return chosen


def coverage_fraction(state: RecoveryState, community: Community) -> float:
    """Fraction of the population currently benefitting from both utilities
    and a served retailer."""
    if community.total_population <= 0:
        raise ZeroPopulation("community population is zero")
    return (
        benefit_for_damage_cached(community, state.damage)
        / community.total_population
    )


def is_terminal(
    state: RecoveryState, community: Community, config: MdpConfig
) -> bool:
    if config.objective is Objective.MIN_TIME_TO_COVERAGE:
        return coverage_fraction(state, community) >= config.alpha
    return all(d == DamageState.NONE for d in state.damage)


def reward(
    next_state: RecoveryState,
    completion_time: float,
    community: Community,
    config: MdpConfig,
) -> float:
    """Obj1: negated completion time, so maximizing return minimizes total
    time.  Obj2: benefitted persons per day of elapsed repair time."""
    if config.objective is Objective.MIN_TIME_TO_COVERAGE:
        return -completion_time
    if next_state.elapsed_time <= 0.0:
        raise ZeroElapsedTime("benefit rate undefined at zero elapsed time")
    return (
        benefit_for_damage_cached(community, next_state.damage)
        / next_state.elapsed_time
    )


def step(
    state: RecoveryState,
    action: RepairAction,
    community: Community,
    config: MdpConfig,
    draws: DrawSource,
) -> TransitionOutcome:
    """One decision epoch: run the assigned repairs until the first
    completion, repair the finisher(s), advance elapsed time, pay reward."""
    check_admissible(state, action, community, config)
    return transition(state, action, community, config, draws)


def transition(
    state: RecoveryState,
    action: RepairAction,
    community: Community,
    config: MdpConfig,
    draws: DrawSource,
) -> TransitionOutcome:
    """step without the admissibility check, for callers that construct
    actions they already know to be valid."""
    assigned = action.assigned_indices()
    damage = list(state.damage)

    if config.repair_model is RepairModel.EXPONENTIAL:
        best_i = -1
        best_t = math.inf
        means = []
        for i in assigned:
            mean = community.repair_means[i][int(damage[i])]
            means.append(mean)
            t = mean * draws.remaining_unit(i)
            if t < best_t:
                best_t = t
                best_i = i
        completion = best_t
        for i, mean in zip(assigned, means):
            if i != best_i:
                draws.consume_unit(i, completion / mean)
        damage[best_i] = DamageState.NONE
        repaired = frozenset((community.components[best_i].id,))
        next_remaining: tuple[float, ...] | None = None
    else:
        remaining = list(state.remaining_work or ())
        if not remaining:
            raise ValidationError(
                "remaining-work repair model needs remaining_work in the state"
            )
        completion = min(remaining[i] for i in assigned)
        done: list[int] = []
        for i in assigned:
            left = remaining[i] - completion
            if left <= 1e-12:
                left = 0.0
                damage[i] = DamageState.NONE
                done.append(i)
            remaining[i] = left
        repaired = frozenset(community.components[i].id for i in done)
        next_remaining = tuple(remaining)

    next_state = RecoveryState(
        damage=tuple(damage),
        elapsed_time=state.elapsed_time + completion,
        remaining_work=next_remaining,
    )
    r = reward(next_state, completion, community, config)
    return TransitionOutcome(
        next_state=next_state,
        completion_time=completion,
        repaired=repaired,
        reward=r,
    )
