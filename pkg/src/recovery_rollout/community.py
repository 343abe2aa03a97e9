"""Interdependent infrastructure model: networks, population grid, retailers.

The community is a directed acyclic dependency graph over electrical (EPN)
and water (WN) components.  A component is functional when it is undamaged
and its suppliers are functional; service to grid cells and retailers is
read off the functional set, and the benefitted-population count weights
cells onto retailers with a gravity model.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import (
    CrossNetworkViolation,
    CycleInDependencies,
    DanglingFeedReference,
    NoRetailers,
    NonPositiveRepairTime,
    ValidationError,
    ZeroDistance,
)


class Network(enum.Enum):
    EPN = "epn"
    WN = "wn"


class ComponentClass(enum.Enum):
    SUBSTATION = "substation"
    TRANSMISSION_SEGMENT = "transmission"
    DISTRIBUTION_SEGMENT = "distribution"
    WATER_TANK = "water_tank"
    WELL = "well"
    PUMPING_PLANT = "pumping_plant"
    PIPELINE = "pipeline"

    @property
    def network(self) -> Network:
        if self in (
            ComponentClass.SUBSTATION,
            ComponentClass.TRANSMISSION_SEGMENT,
            ComponentClass.DISTRIBUTION_SEGMENT,
        ):
            return Network.EPN
        return Network.WN


class DamageState(enum.IntEnum):
    """Ordered damage levels; NONE means fully functional."""

    NONE = 0
    MINOR = 1
    MODERATE = 2
    EXTENSIVE = 3
    COMPLETE = 4


DAMAGED_STATES = (
    DamageState.MINOR,
    DamageState.MODERATE,
    DamageState.EXTENSIVE,
    DamageState.COMPLETE,
)

# Expected repair durations in days, by class and damage state
# (minor, moderate, extensive, complete).  Pipelines carry no default:
# scenarios must supply repair times for them explicitly.
DEFAULT_REPAIR_DAYS: dict[ComponentClass, tuple[float, float, float, float]] = {
    ComponentClass.SUBSTATION: (1.0, 3.0, 7.0, 30.0),
    ComponentClass.TRANSMISSION_SEGMENT: (0.5, 1.0, 1.0, 2.0),
    ComponentClass.DISTRIBUTION_SEGMENT: (0.5, 1.0, 1.0, 1.0),
    ComponentClass.WATER_TANK: (1.2, 3.1, 93.0, 155.0),
    ComponentClass.WELL: (0.8, 1.5, 10.5, 26.0),
    ComponentClass.PUMPING_PLANT: (0.9, 3.1, 13.5, 35.0),
}


@dataclass(frozen=True)
class Component:
    """One repairable element of the EPN or WN.

    ``any_supplier=True`` marks a virtual OR-junction: it is functional when
    undamaged and at least one supplier is functional, which expresses
    redundant feeds that a pure AND graph cannot.
    """

    id: int
    kind: ComponentClass
    mean_repair_days: dict[DamageState, float]
    location: tuple[float, float] | None = None
    any_supplier: bool = False

    @property
    def network(self) -> Network:
        return self.kind.network

    def __post_init__(self) -> None:
        previous = 0.0
        for state in DAMAGED_STATES:
            if state not in self.mean_repair_days:
                raise NonPositiveRepairTime(
                    f"component {self.id}: missing repair time for {state.name}"
                )
            days = float(self.mean_repair_days[state])
            if days <= 0.0:
                raise NonPositiveRepairTime(
                    f"component {self.id}: repair time for {state.name} must be > 0"
                )
            if days < previous:
                raise ValidationError(
                    f"component {self.id}: repair times must not decrease with severity"
                )
            previous = days


@dataclass(frozen=True)
class GridCell:
    id: int
    population: int
    centroid: tuple[float, float]
    power_feed: int
    water_feed: int


@dataclass(frozen=True)
class Retailer:
    id: int
    capacity: float
    centroid: tuple[float, float]
    power_feed: int
    water_feed: int

    def __post_init__(self) -> None:
        if self.capacity <= 0.0:
            raise ValidationError(f"retailer {self.id}: capacity must be > 0")


@dataclass(frozen=True)
class ServiceStatus:
    """Utility availability per cell and per retailer, aligned with the
    community's cell/retailer ordering.  Each entry is (has_power, has_water)."""

    cells: tuple[tuple[bool, bool], ...]
    retailers: tuple[tuple[bool, bool], ...]


@dataclass(frozen=True)
class DependencyGraph:
    """Directed supplier -> dependent edges.  Listed edges are hard
    AND-dependencies unless the dependent is an OR-junction."""

    edges: tuple[tuple[int, int], ...] = field(default_factory=tuple)


class Community:
    """Validated, immutable composition of components, graph, cells and
    retailers, with derived index structures precomputed for simulation.

    Construct through :func:`build_community`; attributes are read-only by
    convention.
    """

    def __init__(
        self,
        components: list[Component],
        graph: DependencyGraph,
        cells: list[GridCell],
        retailers: list[Retailer],
        gravity_exponent: float = 2.0,
    ) -> None:
        if gravity_exponent <= 0.0:
            raise ValidationError("gravity_exponent must be > 0")
        self.components: tuple[Component, ...] = tuple(
            sorted(components, key=lambda c: c.id)
        )
        self.graph = graph
        self.cells: tuple[GridCell, ...] = tuple(sorted(cells, key=lambda c: c.id))
        self.retailers: tuple[Retailer, ...] = tuple(
            sorted(retailers, key=lambda r: r.id)
        )
        self.gravity_exponent = float(gravity_exponent)

        self.index_of: dict[int, int] = {}
        for idx, comp in enumerate(self.components):
            if comp.id in self.index_of:
                raise ValidationError(f"duplicate component id {comp.id}")
            self.index_of[comp.id] = idx
        n = len(self.components)

        self._validate_edges()
        supplier_lists: list[list[int]] = [[] for _ in range(n)]
        for supplier, dependent in self.graph.edges:
            supplier_lists[self.index_of[dependent]].append(self.index_of[supplier])
        self.suppliers: tuple[tuple[int, ...], ...] = tuple(
            tuple(sorted(s)) for s in supplier_lists
        )
        self.topo_order: tuple[int, ...] = self._toposort()

        self.network_of: tuple[Network, ...] = tuple(
            c.network for c in self.components
        )
        self.epn_indices: tuple[int, ...] = tuple(
            i for i in range(n) if self.network_of[i] is Network.EPN
        )
        self.wn_indices: tuple[int, ...] = tuple(
            i for i in range(n) if self.network_of[i] is Network.WN
        )
        self.any_supplier_flags: tuple[bool, ...] = tuple(
            c.any_supplier for c in self.components
        )
        # repair_means[idx][state] with index 0 (NONE) unused
        self.repair_means: tuple[tuple[float, ...], ...] = tuple(
            (math.nan,) + tuple(c.mean_repair_days[s] for s in DAMAGED_STATES)
            for c in self.components
        )

        self._validate_feeds()
        self.cell_power_idx = tuple(self.index_of[c.power_feed] for c in self.cells)
        self.cell_water_idx = tuple(self.index_of[c.water_feed] for c in self.cells)
        self.ret_power_idx = tuple(self.index_of[r.power_feed] for r in self.retailers)
        self.ret_water_idx = tuple(self.index_of[r.water_feed] for r in self.retailers)
        self.populations: tuple[int, ...] = tuple(c.population for c in self.cells)
        self.total_population: int = sum(self.populations)

        self.weights: tuple[tuple[float, ...], ...] = gravity_weights(self)
        # memo for benefit_for_damage_cached; damage vectors recur heavily
        # across simulated trajectories
        self._benefit_cache: dict[tuple[DamageState, ...], float] = {}

    @property
    def n_components(self) -> int:
        return len(self.components)

    def component(self, component_id: int) -> Component:
        return self.components[self.index_of[component_id]]

    def _validate_edges(self) -> None:
        for supplier, dependent in self.graph.edges:
            for cid in (supplier, dependent):
                if cid not in self.index_of:
                    raise DanglingFeedReference(
                        f"dependency edge ({supplier} -> {dependent}) references "
                        f"unknown component {cid}"
                    )
            sup = self.components[self.index_of[supplier]]
            dep = self.components[self.index_of[dependent]]
            if dep.network is Network.EPN and sup.network is not Network.EPN:
                raise CrossNetworkViolation(
                    f"EPN component {dependent} cannot depend on "
                    f"{sup.network.value.upper()} component {supplier}"
                )
            if dep.kind is ComponentClass.PIPELINE and sup.network is not Network.WN:
                raise CrossNetworkViolation(
                    f"pipeline {dependent} cannot depend directly on "
                    f"EPN component {supplier}"
                )

    def _toposort(self) -> tuple[int, ...]:
        n = len(self.components)
        indegree = [0] * n
        dependents: list[list[int]] = [[] for _ in range(n)]
        for supplier, dependent in self.graph.edges:
            s, d = self.index_of[supplier], self.index_of[dependent]
            indegree[d] += 1
            dependents[s].append(d)
        frontier = sorted(i for i in range(n) if indegree[i] == 0)
        order: list[int] = []
        while frontier:
            i = frontier.pop(0)
            order.append(i)
            for d in dependents[i]:
                indegree[d] -= 1
                if indegree[d] == 0:
                    frontier.append(d)
        if len(order) != n:
            stuck = sorted(self.components[i].id for i in range(n) if indegree[i] > 0)
            raise CycleInDependencies(f"dependency cycle through components {stuck}")
        return tuple(order)

    def _validate_feeds(self) -> None:
        for cell in self.cells:
            self._check_feed("cell", cell.id, cell.power_feed, Network.EPN)
            self._check_feed("cell", cell.id, cell.water_feed, Network.WN)
        for retailer in self.retailers:
            self._check_feed("retailer", retailer.id, retailer.power_feed, Network.EPN)
            self._check_feed("retailer", retailer.id, retailer.water_feed, Network.WN)

    def _check_feed(self, owner: str, owner_id: int, feed: int, network: Network) -> None:
        if feed not in self.index_of:
            raise DanglingFeedReference(
                f"{owner} {owner_id}: feed references unknown component {feed}"
            )
        actual = self.components[self.index_of[feed]].network
        if actual is not network:
            raise CrossNetworkViolation(
                f"{owner} {owner_id}: {network.value} feed points at a "
                f"{actual.value} component ({feed})"
            )


def build_community(
    components: list[Component],
    edges: list[tuple[int, int]],
    cells: list[GridCell],
    retailers: list[Retailer],
    gravity_exponent: float = 2.0,
) -> Community:
    """Validate and assemble a community; raises a ValidationError subclass
    on any broken invariant."""
    return Community(
        components=components,
        graph=DependencyGraph(edges=tuple((int(s), int(d)) for s, d in edges)),
        cells=cells,
        retailers=retailers,
        gravity_exponent=gravity_exponent,
    )


def functional_mask(
    community: Community, damage: tuple[DamageState, ...]
) -> list[bool]:
    """Per-index functionality flags: undamaged and all (or, for an
    OR-junction, at least one) suppliers functional.  Well defined because
    the graph is acyclic; computed in one topological pass."""
    mask = [False] * community.n_components
    suppliers = community.suppliers
    any_flags = community.any_supplier_flags
    for i in community.topo_order:
        if damage[i] != DamageState.NONE:
            continue
        sup = suppliers[i]
        if not sup:
            mask[i] = True
        elif any_flags[i]:
            mask[i] = any(mask[s] for s in sup)
        else:
            mask[i] = all(mask[s] for s in sup)
    return mask


def functional_set(
    community: Community, damage: tuple[DamageState, ...]
) -> frozenset[int]:
    """Ids of functional components under the given damage vector."""
    mask = functional_mask(community, damage)
    return frozenset(
        community.components[i].id for i in range(community.n_components) if mask[i]
    )


def service_status(community: Community, functional: frozenset[int]) -> ServiceStatus:
    """Utility availability for every cell and retailer, looked up from the
    functional set."""
    fn = functional
    cells = tuple(
        (cell.power_feed in fn, cell.water_feed in fn) for cell in community.cells
    )
    retailers = tuple(
        (r.power_feed in fn, r.water_feed in fn) for r in community.retailers
    )
    return ServiceStatus(cells=cells, retailers=retailers)


def gravity_weights(community: Community) -> tuple[tuple[float, ...], ...]:
    """Cell-by-retailer shopping weights: capacity times inverse-power
    distance, normalized so each row sums to one."""
    if not community.retailers:
        raise NoRetailers("community has no retailers")
    p = community.gravity_exponent
    rows: list[tuple[float, ...]] = []
    for cell in community.cells:
        raw: list[float] = []
        for retailer in community.retailers:
            dx = cell.centroid[0] - retailer.centroid[0]
            dy = cell.centroid[1] - retailer.centroid[1]
            dist = math.hypot(dx, dy)
            if dist == 0.0:
                raise ZeroDistance(
                    f"cell {cell.id} is co-located with retailer {retailer.id}; "
                    "offset one of the centroids"
                )
            raw.append(retailer.capacity * dist**-p)
        total = sum(raw)
        rows.append(tuple(w / total for w in raw))
    return tuple(rows)


def benefit_count(
    community: Community,
    status: ServiceStatus,
    weights: tuple[tuple[float, ...], ...],
) -> float:
    """Expected number of people with power, water, and access to a fully
    served retailer.  A retailer missing either utility contributes nothing."""
    total = 0.0
    for ci, (has_power, has_water) in enumerate(status.cells):
        if not (has_power and has_water):
            continue
        row = weights[ci]
        served = 0.0
        for ri, (r_power, r_water) in enumerate(status.retailers):
            if r_power and r_water:
                served += row[ri]
        total += community.populations[ci] * served
    return total


def benefit_from_mask(community: Community, mask: list[bool]) -> float:
    """Benefit count from a precomputed functionality mask."""
    ret_ok = [
        mask[community.ret_power_idx[ri]] and mask[community.ret_water_idx[ri]]
        for ri in range(len(community.retailers))
    ]
    if not any(ret_ok):
        return 0.0
    total = 0.0
    weights = community.weights
    for ci in range(len(community.cells)):
        if mask[community.cell_power_idx[ci]] and mask[community.cell_water_idx[ci]]:
            row = weights[ci]
            served = 0.0
            for ri, ok in enumerate(ret_ok):
                if ok:
                    served += row[ri]
            total += community.populations[ci] * served
    return total


def benefit_for_damage(
    community: Community, damage: tuple[DamageState, ...]
) -> float:
    """Fused fast path: benefit count straight from a damage vector."""
    return benefit_from_mask(community, functional_mask(community, damage))


def benefit_for_damage_cached(
    community: Community, damage: tuple[DamageState, ...]
) -> float:
    """Memoized benefit count; safe because damage vectors are immutable."""
    cache = community._benefit_cache
    value = cache.get(damage)
    if value is None:
        value = benefit_for_damage(community, damage)
        cache[damage] = value
    return value


def fractions_from_mask(
    community: Community, mask: list[bool]
) -> tuple[float, float]:
    """(EPN, WN) fractions of components functional under a mask."""
    epn = community.epn_indices
    wn = community.wn_indices
    epn_frac = sum(1 for i in epn if mask[i]) / len(epn) if epn else 1.0
    wn_frac = sum(1 for i in wn if mask[i]) / len(wn) if wn else 1.0
    return epn_frac, wn_frac


def network_functional_fractions(
    community: Community, damage: tuple[DamageState, ...]
) -> tuple[float, float]:
    """(EPN, WN) fractions of components currently functional."""
    return fractions_from_mask(community, functional_mask(community, damage))
