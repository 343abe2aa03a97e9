"""Shared builders for desk-scale test communities.

Tests construct tiny networks in code rather than loading scenario files,
so each case pins exactly the structure it exercises.  The bundled YAML
fixtures are only touched by the scenario/CLI tests and the acceptance
suite.
"""

from __future__ import annotations

import numpy as np
import pytest

from recovery_rollout.community import (
    Community,
    Component,
    ComponentClass,
    DamageState,
    GridCell,
    Retailer,
    build_community,
    functional_mask,
)

PIPE_DAYS = {
    DamageState.MINOR: 0.5,
    DamageState.MODERATE: 1.0,
    DamageState.EXTENSIVE: 2.0,
    DamageState.COMPLETE: 4.0,
}


def comp(
    cid: int,
    kind: ComponentClass,
    days: dict[DamageState, float] | None = None,
    any_supplier: bool = False,
) -> Component:
    from recovery_rollout.community import DAMAGED_STATES, DEFAULT_REPAIR_DAYS

    if days is None:
        if kind is ComponentClass.PIPELINE:
            days = PIPE_DAYS
        else:
            days = dict(zip(DAMAGED_STATES, DEFAULT_REPAIR_DAYS[kind]))
    return Component(
        id=cid, kind=kind, mean_repair_days=dict(days), any_supplier=any_supplier
    )


def damage_for(community: Community, states: dict[int, DamageState]):
    """Damage vector in index order from a sparse id -> state mapping."""
    return tuple(
        states.get(c.id, DamageState.NONE) for c in community.components
    )


def two_utility_community() -> Community:
    """Smallest community with both networks live: substation 1 ->
    distribution 2 powers everything; well 3 -> pipeline 4 supplies water.
    One cell, one retailer."""
    components = [
        comp(1, ComponentClass.SUBSTATION),
        comp(2, ComponentClass.DISTRIBUTION_SEGMENT),
        comp(3, ComponentClass.WELL),
        comp(4, ComponentClass.PIPELINE),
    ]
    edges = [(1, 2), (3, 4)]
    cells = [
        GridCell(id=1, population=1000, centroid=(1.0, 0.0), power_feed=2, water_feed=4)
    ]
    retailers = [
        Retailer(id=1, capacity=100.0, centroid=(1.0, 1.0), power_feed=2, water_feed=4)
    ]
    return build_community(components, edges, cells, retailers)


def desk_community() -> Community:
    """Seven components mirroring the bundled deterministic fixture:
    substation 1 -> transmission 2 -> distributions 3, 4; well 5 (powered
    by 3) -> tank 6 -> pipeline 7.  Two cells (600 and 400 people), one
    retailer on feeds 3 / 7."""
    components = [
        comp(1, ComponentClass.SUBSTATION),
        comp(2, ComponentClass.TRANSMISSION_SEGMENT),
        comp(3, ComponentClass.DISTRIBUTION_SEGMENT),
        comp(4, ComponentClass.DISTRIBUTION_SEGMENT),
        comp(5, ComponentClass.WELL),
        comp(6, ComponentClass.WATER_TANK),
        comp(7, ComponentClass.PIPELINE),
    ]
    edges = [(1, 2), (2, 3), (2, 4), (3, 5), (5, 6), (6, 7)]
    cells = [
        GridCell(id=1, population=600, centroid=(2.2, 0.8), power_feed=3, water_feed=7),
        GridCell(id=2, population=400, centroid=(2.2, -0.8), power_feed=4, water_feed=7),
    ]
    retailers = [
        Retailer(id=1, capacity=100.0, centroid=(2.4, 0.3), power_feed=3, water_feed=7)
    ]
    return build_community(components, edges, cells, retailers)


def random_dag_community(rng: np.random.Generator, max_nodes: int = 30) -> Community:
    """Random acyclic EPN-only dependency graph for functionality-oracle
    checks.  Edges only go from lower to higher index, so acyclicity holds
    by construction; roughly a quarter of multi-supplier nodes are
    OR-junctions."""
    n = int(rng.integers(2, max_nodes + 1))
    components = []
    edges: list[tuple[int, int]] = []
    any_flags: dict[int, bool] = {}
    for i in range(1, n + 1):
        suppliers = [j for j in range(1, i) if rng.random() < 0.25]
        any_flags[i] = len(suppliers) > 1 and rng.random() < 0.25
        components.append(
            comp(
                i,
                ComponentClass.DISTRIBUTION_SEGMENT,
                any_supplier=any_flags[i],
            )
        )
        edges.extend((j, i) for j in suppliers)
    # water side + service plumbing kept constant; the oracle only reads
    # the EPN subgraph
    components.append(comp(n + 1, ComponentClass.PIPELINE))
    cells = [
        GridCell(
            id=1, population=10, centroid=(0.5, 0.5), power_feed=1, water_feed=n + 1
        )
    ]
    retailers = [
        Retailer(
            id=1, capacity=5.0, centroid=(1.5, 0.0), power_feed=1, water_feed=n + 1
        )
    ]
    return build_community(components, edges, cells, retailers)


def iterative_removal_oracle(
    community: Community, damage: tuple[DamageState, ...]
) -> frozenset[int]:
    """Fixed point by repeated sweeps: start from all undamaged components,
    drop any whose supplier support fails (every supplier for AND nodes, all
    suppliers for OR nodes), repeat until stable."""
    alive = {
        i
        for i in range(community.n_components)
        if damage[i] == DamageState.NONE
    }
    changed = True
    while changed:
        changed = False
        for i in sorted(alive):
            sup = community.suppliers[i]
            if not sup:
                continue
            if community.any_supplier_flags[i]:
                ok = any(s in alive for s in sup)
            else:
                ok = all(s in alive for s in sup)
            if not ok:
                alive.remove(i)
                changed = True
    return frozenset(community.components[i].id for i in sorted(alive))


@pytest.fixture
def two_utility():
    return two_utility_community()


@pytest.fixture
def desk():
    return desk_community()


def assert_mask_matches_ids(community: Community, damage, expected_ids):
    mask = functional_mask(community, damage)
    got = {
        community.components[i].id
        for i in range(community.n_components)
        if mask[i]
    }
    assert got == set(expected_ids)
