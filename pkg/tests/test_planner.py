"""Base policy, rollout lookahead, episode runner, and the schedule oracle."""

from __future__ import annotations

import numpy as np
import pytest

from recovery_rollout.community import (
    ComponentClass,
    DamageState,
    GridCell,
    Retailer,
    build_community,
)
from recovery_rollout.errors import (
    InstanceTooLarge,
    TerminalState,
    ValidationError,
)
from recovery_rollout.hazard import ComponentHazard
from recovery_rollout.mdp import (
    MdpConfig,
    Objective,
    RepairModel,
    RepairWorkTable,
    action_from_indices,
    initial_state,
)
from recovery_rollout.planner import (
    TAG_TRAJECTORY,
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
    keyed_seed,
    rollout_decision,
    run_episode,
    trajectory_return,
)

from conftest import comp, damage_for, desk_community, two_utility_community

C = ComponentClass
D = DamageState
BASE = PriorityBasePolicy()


def junk_pair_community():
    """Two damaged distribution segments behind one substation: id 2 is a
    dead end taking 4 days, id 3 feeds the only cell and takes 3.  The
    base policy repairs by ascending id, so it starts with the dead end."""
    components = [
        comp(1, C.SUBSTATION),
        comp(2, C.DISTRIBUTION_SEGMENT,
             days={D.MINOR: 2.0, D.MODERATE: 4.0, D.EXTENSIVE: 5.0,
                   D.COMPLETE: 6.0}),
        comp(3, C.DISTRIBUTION_SEGMENT,
             days={D.MINOR: 1.5, D.MODERATE: 3.0, D.EXTENSIVE: 3.5,
                   D.COMPLETE: 4.0}),
        comp(4, C.WELL),
        comp(5, C.PIPELINE),
    ]
    edges = [(1, 2), (1, 3), (4, 5)]
    cells = [GridCell(id=1, population=900, centroid=(1.0, 0.5),
                      power_feed=3, water_feed=5)]
    retailers = [Retailer(id=1, capacity=90.0, centroid=(1.0, -0.5),
                          power_feed=3, water_feed=5)]
    return build_community(components, edges, cells, retailers)


JUNK_DAMAGE = {2: D.MODERATE, 3: D.MODERATE}
JUNK_MDP = MdpConfig(n_e=1, n_w=1, gamma=1.0, alpha=1.0,
                     repair_model=RepairModel.REMAINING_WORK)


def detour_community():
    """Stochastic-mode sibling of the junk pair: the base policy's class
    order sends the electric crew to a 5-day dead-end transmission segment
    while the cell waits on a 1-day distribution repair; water needs a
    2-day pipeline repair either way."""
    components = [
        comp(1, C.SUBSTATION),
        comp(2, C.TRANSMISSION_SEGMENT,
             days={D.MINOR: 2.5, D.MODERATE: 5.0, D.EXTENSIVE: 7.0,
                   D.COMPLETE: 9.0}),
        comp(3, C.WELL),
        comp(4, C.PIPELINE,
             days={D.MINOR: 1.0, D.MODERATE: 2.0, D.EXTENSIVE: 3.0,
                   D.COMPLETE: 4.0}),
        comp(5, C.DISTRIBUTION_SEGMENT),
    ]
    edges = [(1, 2), (1, 5), (3, 4)]
    cells = [GridCell(id=1, population=800, centroid=(1.5, 0.0),
                      power_feed=5, water_feed=4)]
    retailers = [Retailer(id=1, capacity=80.0, centroid=(0.5, 1.0),
                          power_feed=5, water_feed=4)]
    return build_community(components, edges, cells, retailers)


DETOUR_DAMAGE = {2: D.MODERATE, 4: D.MODERATE, 5: D.MODERATE}


def detour_mdp(repair_model):
    return MdpConfig(n_e=1, n_w=1, gamma=0.99, alpha=1.0,
                     repair_model=repair_model)


# --- base policy -------------------------------------------------------------


def test_base_prefers_transmission_over_substation():
    community = desk_community()
    config = MdpConfig(n_e=1, n_w=1)
    damage = damage_for(community, {1: D.MINOR, 2: D.MINOR, 3: D.MINOR})
    state = initial_state(community, damage, config)
    action = base_action(state, community, config, BASE)
    assert action.assigned_indices() == (1,)  # transmission id 2


def test_base_breaks_class_ties_by_id():
    community = junk_pair_community()
    config = MdpConfig(n_e=1, n_w=1)
    state = initial_state(community, damage_for(community, JUNK_DAMAGE), config)
    action = base_action(state, community, config, BASE)
    assert action.assigned_indices() == (1,)  # distribution id 2, not 3


def test_base_assigns_everything_when_crews_exceed_damage():
    community = desk_community()
    config = MdpConfig(n_e=4, n_w=3)
    damage = damage_for(
        community, {cid: D.MINOR for cid in (1, 2, 3, 4, 5, 6, 7)}
    )
    state = initial_state(community, damage, config)
    action = base_action(state, community, config, BASE)
    assert action.assigned_indices() == (0, 1, 2, 3, 4, 5, 6)


def test_base_respects_custom_class_order():
    community = desk_community()
    policy = PriorityBasePolicy(
        epn_priority=(C.SUBSTATION, C.TRANSMISSION_SEGMENT,
                      C.DISTRIBUTION_SEGMENT)
    )
    config = MdpConfig(n_e=1, n_w=1)
    damage = damage_for(community, {1: D.MINOR, 2: D.MINOR})
    state = initial_state(community, damage, config)
    action = base_action(state, community, config, policy)
    assert action.assigned_indices() == (0,)  # substation id 1 first now


def test_base_policy_validation():
    with pytest.raises(ValidationError):
        PriorityBasePolicy(epn_priority=(C.SUBSTATION,))
    with pytest.raises(ValidationError):
        PriorityBasePolicy(wn_priority=(C.WELL, C.WELL, C.PUMPING_PLANT,
                                        C.PIPELINE))


def test_base_action_terminal_raises():
    community = two_utility_community()
    config = MdpConfig(n_e=1, n_w=1)
    state = initial_state(community, damage_for(community, {}), config)
    with pytest.raises(TerminalState):
        base_action(state, community, config, BASE)


def test_base_action_memoized():
    community = two_utility_community()
    config = MdpConfig(n_e=1, n_w=1)
    state = initial_state(community, damage_for(community, {1: D.MINOR}), config)
    again = initial_state(community, damage_for(community, {1: D.MINOR}), config)
    assert base_action(state, community, config, BASE) is base_action(
        again, community, config, BASE
    )


# --- trajectory returns and Q estimates -------------------------------------


def test_trajectory_return_hand_computed():
    community = junk_pair_community()
    state = initial_state(community, damage_for(community, JUNK_DAMAGE), JUNK_MDP)
    junk_first = action_from_indices(5, (1,))
    good_first = action_from_indices(5, (2,))
    # repairing the dead end first: 4 days, then 3 more for the real feed
    assert trajectory_return(
        state, junk_first, BASE, JUNK_MDP, community, horizon=5, draws=None
    ) == pytest.approx(-7.0)
    assert trajectory_return(
        state, good_first, BASE, JUNK_MDP, community, horizon=5, draws=None
    ) == pytest.approx(-3.0)


def test_trajectory_return_discounting_and_truncation():
    community = junk_pair_community()
    mdp = MdpConfig(n_e=1, n_w=1, gamma=0.5, alpha=1.0,
                    repair_model=RepairModel.REMAINING_WORK)
    state = initial_state(community, damage_for(community, JUNK_DAMAGE), mdp)
    junk_first = action_from_indices(5, (1,))
    # first transition undiscounted, the follow-up step scaled by gamma
    assert trajectory_return(
        state, junk_first, BASE, mdp, community, horizon=5, draws=None
    ) == pytest.approx(-4.0 + 0.5 * -3.0)
    assert trajectory_return(
        state, junk_first, BASE, mdp, community, horizon=0, draws=None
    ) == pytest.approx(-4.0)


def test_estimate_q_deterministic_single_trajectory():
    community = junk_pair_community()
    state = initial_state(community, damage_for(community, JUNK_DAMAGE), JUNK_MDP)
    est = estimate_q(
        state, action_from_indices(5, (2,)), BASE, RolloutConfig(), JUNK_MDP,
        community, horizon=5, draws_for_trajectory=lambda j: None,
    )
    assert est == QEstimate(value=-3.0, std_error=0.0, n_trajectories=1,
                            returns=(-3.0,))


def _table_draws(community, root_seed=0, decision=0):
    tables = {}

    def draws_for_trajectory(j):
        if j not in tables:
            tables[j] = RepairWorkTable(
                keyed_seed(root_seed, TAG_TRAJECTORY, decision, j),
                community.n_components,
            )
        return tables[j].cursor()

    return draws_for_trajectory


def test_estimate_q_adaptive_batching():
    community = detour_community()
    mdp = detour_mdp(RepairModel.EXPONENTIAL)
    state = initial_state(community, damage_for(community, DETOUR_DAMAGE), mdp)
    action = action_from_indices(5, (3, 4))

    tight = RolloutConfig(n_mc_min=8, n_mc_max=64, se_threshold=1e-6)
    est = estimate_q(state, action, BASE, tight, mdp, community, 5,
                     _table_draws(community))
    assert est.n_trajectories == 64
    assert len(est.returns) == 64
    assert est.value == pytest.approx(float(np.mean(est.returns)))

    loose = RolloutConfig(n_mc_min=8, n_mc_max=64, se_threshold=1e9)
    est = estimate_q(state, action, BASE, loose, mdp, community, 5,
                     _table_draws(community))
    assert est.n_trajectories == 8
    assert est.std_error < 1e9


def test_worst_case_value_is_minimum_return():
    community = detour_community()
    mdp = detour_mdp(RepairModel.EXPONENTIAL)
    state = initial_state(community, damage_for(community, DETOUR_DAMAGE), mdp)
    action = action_from_indices(5, (3, 4))
    config = RolloutConfig(n_mc_min=16, n_mc_max=16, se_threshold=1e9,
                           mode=RolloutMode.WORST_CASE)
    worst = estimate_q(state, action, BASE, config, mdp, community, 5,
                       _table_draws(community, root_seed=3))
    mean_cfg = RolloutConfig(n_mc_min=16, n_mc_max=16, se_threshold=1e9)
    mean = estimate_q(state, action, BASE, mean_cfg, mdp, community, 5,
                      _table_draws(community, root_seed=3))
    assert worst.returns == mean.returns  # shared tables, same trajectories
    assert worst.value == pytest.approx(min(worst.returns))
    assert worst.value <= mean.value + 1e-12


def test_rollout_config_validation():
    with pytest.raises(ValidationError):
        RolloutConfig(n_mc_min=0)
    with pytest.raises(ValidationError):
        RolloutConfig(n_mc_min=32, n_mc_max=8)
    with pytest.raises(ValidationError):
        RolloutConfig(se_threshold=0.0)
    with pytest.raises(ValidationError):
        RolloutConfig(horizon=-1)


# --- rollout decisions -------------------------------------------------------


def test_rollout_overrides_base_on_deterministic_instance():
    community = junk_pair_community()
    state = initial_state(community, damage_for(community, JUNK_DAMAGE), JUNK_MDP)
    action, record = rollout_decision(
        state, BASE, RolloutConfig(), JUNK_MDP, community, root_seed=0
    )
    assert action.assigned_indices() == (2,)  # the real feed, not the dead end
    assert len(record.estimates) == 2
    by_action = {a.assigned_indices(): est for a, est in record.estimates}
    assert by_action[(2,)].value == pytest.approx(-3.0)
    assert by_action[(1,)].value == pytest.approx(-7.0)


def test_rollout_single_candidate_short_circuits():
    community = two_utility_community()
    mdp = MdpConfig(n_e=1, n_w=1)
    state = initial_state(community, damage_for(community, {1: D.MINOR}), mdp)
    action, record = rollout_decision(
        state, BASE, RolloutConfig(), mdp, community, root_seed=0
    )
    assert action.assigned_indices() == (0,)
    assert record.estimates == ()
    assert record.chosen == action


def test_rollout_decision_deterministic_given_seed():
    community = detour_community()
    mdp = detour_mdp(RepairModel.EXPONENTIAL)
    state = initial_state(community, damage_for(community, DETOUR_DAMAGE), mdp)
    config = RolloutConfig(n_mc_min=16, n_mc_max=32, se_threshold=0.5)
    first = rollout_decision(state, BASE, config, mdp, community,
                             root_seed=11, decision_index=3)
    second = rollout_decision(state, BASE, config, mdp, community,
                              root_seed=11, decision_index=3)
    assert first == second


def test_rollout_beats_base_detour_on_most_seeds():
    """The lookahead must reroute the electric crew away from the dead end
    under Monte-Carlo noise for nearly every root seed, and its choice must
    match the exact schedule oracle on the deterministic twin."""
    community = detour_community()
    det = detour_mdp(RepairModel.REMAINING_WORK)
    damage = damage_for(community, DETOUR_DAMAGE)
    oracle_value, oracle_first = exhaustive_oracle(damage, community, det)
    assert oracle_value == pytest.approx(2.0)
    assert oracle_first.assigned_indices() == (3, 4)

    mdp = detour_mdp(RepairModel.EXPONENTIAL)
    state = initial_state(community, damage, mdp)
    config = RolloutConfig(n_mc_min=24, n_mc_max=48, se_threshold=0.5)
    hits = 0
    for root_seed in range(100):
        action, _ = rollout_decision(state, BASE, config, mdp, community,
                                     root_seed=root_seed)
        hits += action == oracle_first
    assert hits >= 95


def test_rollout_keeps_base_when_evidence_is_flat():
    """Two interchangeable dead ends: every candidate has the same value, so
    the decision must stick with the base action rather than chase noise."""
    components = [
        comp(1, C.SUBSTATION),
        comp(2, C.DISTRIBUTION_SEGMENT),
        comp(3, C.DISTRIBUTION_SEGMENT),
        comp(4, C.DISTRIBUTION_SEGMENT),
        comp(5, C.WELL),
        comp(6, C.PIPELINE),
    ]
    edges = [(1, 2), (1, 3), (1, 4), (5, 6)]
    cells = [GridCell(id=1, population=400, centroid=(1.0, 0.0),
                      power_feed=2, water_feed=6)]
    retailers = [Retailer(id=1, capacity=40.0, centroid=(0.0, 1.0),
                          power_feed=2, water_feed=6)]
    community = build_community(components, edges, cells, retailers)
    mdp = MdpConfig(n_e=1, n_w=1, alpha=1.0)
    # identical dead ends 3 and 4; the cell feed 2 is already healthy
    state = initial_state(
        community, damage_for(community, {3: D.MODERATE, 4: D.MODERATE}), mdp
    )
    config = RolloutConfig(n_mc_min=16, n_mc_max=32, se_threshold=0.5)
    base = base_action(state, community, mdp, BASE)
    for root_seed in range(20):
        action, _ = rollout_decision(state, BASE, config, mdp, community,
                                     root_seed=root_seed)
        assert action == base


# --- restoration curves ------------------------------------------------------


def test_curve_arithmetic():
    curve = RestorationCurve(points=(
        (0.0, 0.0, 0.2, 0.5),
        (2.0, 100.0, 0.6, 0.5),
        (5.0, 300.0, 1.0, 1.0),
    ))
    assert curve.total_time == 5.0
    assert curve.area() == pytest.approx(0.0 * 2.0 + 100.0 * 3.0)
    assert curve.benefit_rate() == pytest.approx(300.0 / 5.0)


def test_curve_times_must_increase():
    with pytest.raises(ValidationError):
        RestorationCurve(points=((0.0, 0.0, 0.0, 0.0), (0.0, 1.0, 0.0, 0.0)))


def test_zero_length_curve_rate_is_initial_benefit():
    curve = RestorationCurve(points=((0.0, 250.0, 1.0, 1.0),))
    assert curve.total_time == 0.0
    assert curve.benefit_rate() == 250.0


# --- episodes ----------------------------------------------------------------


def test_episode_zero_damage():
    community = two_utility_community()
    mdp = MdpConfig(n_e=1, n_w=1, objective=Objective.MAX_BENEFIT_RATE)
    result = run_episode(
        PolicyKind.BASE, damage_for(community, {}), community, mdp,
        RolloutConfig(), BASE, root_seed=0,
    )
    assert result.total_time == 0.0
    assert result.steps == ()
    assert result.retailer_recovery == (0.0,)
    assert result.metric(Objective.MAX_BENEFIT_RATE) == pytest.approx(1000.0)


def test_episode_deterministic_base_hand_checked():
    community = two_utility_community()
    mdp = MdpConfig(n_e=1, n_w=1, alpha=1.0,
                    repair_model=RepairModel.REMAINING_WORK)
    # substation 3 days, well 1.5 days, one crew each working in parallel
    damage = damage_for(community, {1: D.MODERATE, 3: D.MODERATE})
    result = run_episode(
        PolicyKind.BASE, damage, community, mdp, RolloutConfig(), BASE,
        root_seed=0,
    )
    assert result.total_time == pytest.approx(3.0)
    assert [s.repaired for s in result.steps] == [(3,), (1,)]
    assert [s.time_days for s in result.steps] == pytest.approx([1.5, 3.0])
    times = [p[0] for p in result.curve.points]
    benefits = [p[1] for p in result.curve.points]
    assert times == pytest.approx([0.0, 1.5, 3.0])
    assert benefits == pytest.approx([0.0, 0.0, 1000.0])
    assert result.retailer_recovery == (pytest.approx(3.0),)


def test_episode_stops_at_coverage_threshold():
    community = junk_pair_community()
    mdp = MdpConfig(n_e=1, n_w=1, alpha=0.8,
                    repair_model=RepairModel.REMAINING_WORK)
    # only the dead end is damaged; coverage already sits at 1.0 >= alpha
    damage = damage_for(community, {2: D.MODERATE})
    result = run_episode(
        PolicyKind.BASE, damage, community, mdp, RolloutConfig(), BASE,
        root_seed=0,
    )
    assert result.total_time == 0.0
    assert result.steps == ()


def test_rollout_episode_beats_base_on_junk_pair():
    community = junk_pair_community()
    damage = damage_for(community, JUNK_DAMAGE)
    base_run = run_episode(
        PolicyKind.BASE, damage, community, JUNK_MDP, RolloutConfig(), BASE,
        root_seed=0,
    )
    rollout_run = run_episode(
        PolicyKind.ROLLOUT, damage, community, JUNK_MDP, RolloutConfig(), BASE,
        root_seed=0,
    )
    assert base_run.total_time == pytest.approx(7.0)
    assert rollout_run.total_time == pytest.approx(3.0)
    assert rollout_run.decisions  # audit trail recorded
    assert rollout_run.decisions[0].chosen.assigned_indices() == (2,)


def test_episode_decision_indices_key_episode_and_step():
    community = junk_pair_community()
    damage = damage_for(community, JUNK_DAMAGE)
    mdp = MdpConfig(n_e=1, n_w=1, gamma=1.0,
                    objective=Objective.MAX_BENEFIT_RATE,
                    repair_model=RepairModel.REMAINING_WORK)
    result = run_episode(
        PolicyKind.ROLLOUT, damage, community, mdp, RolloutConfig(), BASE,
        root_seed=0, episode_index=3,
    )
    assert [d.index for d in result.decisions] == [30_000, 30_001]


# --- policy evaluation -------------------------------------------------------


def test_evaluate_policy_needs_two_episodes():
    community = two_utility_community()
    with pytest.raises(ValidationError):
        evaluate_policy(
            PolicyKind.BASE, community, {}, MdpConfig(n_e=1, n_w=1),
            RolloutConfig(), BASE, n_episodes=1, root_seed=0,
        )


def test_evaluate_policy_deterministic_hazard():
    community = detour_community()
    mdp = detour_mdp(RepairModel.REMAINING_WORK)
    hazards = {cid: ComponentHazard(fixed=D.NONE) for cid in (1, 3)}
    hazards.update({
        2: ComponentHazard(fixed=D.MODERATE),
        4: ComponentHazard(fixed=D.MODERATE),
        5: ComponentHazard(fixed=D.MODERATE),
    })
    mean, stderr, metrics = evaluate_policy(
        PolicyKind.ROLLOUT, community, hazards, mdp, RolloutConfig(), BASE,
        n_episodes=3, root_seed=5,
    )
    assert metrics == pytest.approx([2.0, 2.0, 2.0])
    assert mean == pytest.approx(2.0)
    assert stderr == 0.0

    base_mean, _, _ = evaluate_policy(
        PolicyKind.BASE, community, hazards, mdp, RolloutConfig(), BASE,
        n_episodes=3, root_seed=5,
    )
    assert base_mean == pytest.approx(6.0)


# --- exhaustive schedule oracle ---------------------------------------------


def test_oracle_single_component():
    community = two_utility_community()
    mdp = MdpConfig(n_e=1, n_w=1, alpha=1.0,
                    repair_model=RepairModel.REMAINING_WORK)
    value, first = exhaustive_oracle(
        damage_for(community, {1: D.MODERATE}), community, mdp
    )
    assert value == pytest.approx(3.0)
    assert first.assigned_indices() == (0,)


def test_oracle_skips_dead_end():
    community = junk_pair_community()
    value, first = exhaustive_oracle(
        damage_for(community, JUNK_DAMAGE), community, JUNK_MDP
    )
    assert value == pytest.approx(3.0)
    assert first.assigned_indices() == (2,)


def test_oracle_never_beaten_by_base():
    community = detour_community()
    mdp = detour_mdp(RepairModel.REMAINING_WORK)
    damage = damage_for(community, DETOUR_DAMAGE)
    value, _ = exhaustive_oracle(damage, community, mdp)
    base_run = run_episode(
        PolicyKind.BASE, damage, community, mdp, RolloutConfig(), BASE,
        root_seed=0,
    )
    assert base_run.total_time == pytest.approx(6.0)
    assert value <= base_run.total_time + 1e-12


def test_oracle_rejects_stochastic_model():
    community = two_utility_community()
    with pytest.raises(ValidationError):
        exhaustive_oracle(
            damage_for(community, {1: D.MINOR}), community,
            MdpConfig(n_e=1, n_w=1),
        )


def test_oracle_guards_instance_size():
    components = [comp(1, C.SUBSTATION)]
    edges = []
    for cid in range(2, 10):
        components.append(comp(cid, C.DISTRIBUTION_SEGMENT))
        edges.append((1, cid))
    components += [comp(10, C.WELL), comp(11, C.PIPELINE)]
    edges.append((10, 11))
    cells = [GridCell(id=1, population=100, centroid=(1.0, 0.0),
                      power_feed=2, water_feed=11)]
    retailers = [Retailer(id=1, capacity=10.0, centroid=(0.0, 1.0),
                          power_feed=2, water_feed=11)]
    community = build_community(components, edges, cells, retailers)
    mdp = MdpConfig(n_e=1, n_w=1, alpha=1.0,
                    repair_model=RepairModel.REMAINING_WORK)
    damage = damage_for(community, {cid: D.MINOR for cid in range(1, 10)})
    with pytest.raises(InstanceTooLarge):
        exhaustive_oracle(damage, community, mdp)
