"""Hierarchical network cost model and 3D stencil / copy-plan simulator.

Message cost is the usual startup-plus-bandwidth form,
``alpha[level] + bytes * inv_bw[level]``, with one parameter pair per
hierarchy level (0 = same node ... 4 = different groups). The simulator
has no noise or contention, so one iteration is enough: repeating it only
scales the result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .errors import InconsistentMapping, ParseError
from .grid import CartesianGrid
from .mapping import UnitMapping, compute_mapping, identity_mapping
from .ranges import CopyPlan, OpKind
from .topology import HierTopology

__all__ = [
    "LatencyModel",
    "StencilSpec",
    "StencilCost",
    "message_cost",
    "stencil_edges",
    "message_levels",
    "stencil_cost",
    "improvement_factor",
    "ImprovementRow",
    "simulate_copy_plan",
    "CopySimulation",
    "load_latency_model",
    "default_latency_model",
    "default_message_sizes",
]

NUM_LEVELS = 5


@dataclass(frozen=True)
class LatencyModel:
    """Per-level startup latency (µs) and inverse bandwidth (µs/byte).

    ``numa_alpha``, when set, is the startup cost between sockets of one
    node; the per-byte cost stays that of level 0.
    """

    alpha: tuple[float, ...]
    inv_bw: tuple[float, ...]
    numa_alpha: float | None = None

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        inv_bw = tuple(float(b) for b in self.inv_bw)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "inv_bw", inv_bw)
        if len(alpha) != NUM_LEVELS or len(inv_bw) != NUM_LEVELS:
            raise ValueError(f"need {NUM_LEVELS} levels of alpha and inv_bw")
        for name, values in (("alpha", alpha), ("inv_bw", inv_bw)):
            if any(v < 0 for v in values):
                raise ValueError(f"{name} must be non-negative")
            if any(b < a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be non-decreasing with the level")
        if self.numa_alpha is not None and self.numa_alpha < 0:
            raise ValueError("numa_alpha must be non-negative")

    def level_costs(self, nbytes: float) -> np.ndarray:
        return np.asarray(self.alpha) + nbytes * np.asarray(self.inv_bw)


def message_cost(model: LatencyModel, level: int, nbytes: float, numa: bool = False) -> float:
    if not 0 <= level < NUM_LEVELS:
        raise ValueError(f"level must be in 0..{NUM_LEVELS - 1}, got {level}")
    alpha = model.alpha[level]
    if numa and level == 0 and model.numa_alpha is not None:
        alpha = model.numa_alpha
    return alpha + nbytes * model.inv_bw[level]


def load_latency_model(stream: TextIO | Iterable[str]) -> LatencyModel:
    """Parse a latency model file.

    One ``<level> <alpha_us> <inv_bw_us_per_byte>`` triple per line for
    levels 0..4, plus an optional ``numa_alpha <alpha_us>`` line. ``#``
    starts a comment.
    """
    alpha: dict[int, float] = {}
    inv_bw: dict[int, float] = {}
    numa_alpha = None
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cols = line.split()
        try:
            if cols[0] == "numa_alpha" and len(cols) == 2:
                numa_alpha = float(cols[1])
                continue
            if len(cols) != 3:
                raise ValueError
            level = int(cols[0])
            a, b = float(cols[1]), float(cols[2])
        except ValueError:
            raise ParseError(f"expected '<level> <alpha_us> <inv_bw_us_per_byte>', got {line!r}", line=lineno) from None
        if not 0 <= level < NUM_LEVELS or level in alpha:
            raise ParseError(f"level {level} out of range or repeated", line=lineno)
        alpha[level], inv_bw[level] = a, b
    missing = sorted(set(range(NUM_LEVELS)) - set(alpha))
    if missing:
        raise ParseError(f"latency model lacks levels {missing}")
    return LatencyModel(
        tuple(alpha[k] for k in range(NUM_LEVELS)),
        tuple(inv_bw[k] for k in range(NUM_LEVELS)),
        numa_alpha,
    )


def default_latency_model() -> LatencyModel:
    """Shipped model: plausible values ordered like XC40 measurements, not measured data."""
    text = resources.files("hiermap").joinpath("data/latency_default.cfg").read_text()
    return load_latency_model(text.splitlines())


def default_message_sizes(max_bytes: int = 2 << 20) -> list[int]:
    """Powers of two from 1 byte to ``max_bytes``."""
    return [1 << k for k in range(max_bytes.bit_length()) if 1 << k <= max_bytes]


@dataclass(frozen=True)
class StencilSpec:
    """Six-point nearest-neighbour exchange on a non-periodic unit grid."""

    grid: CartesianGrid
    message_bytes: int = 8
    iterations: int = 10_000

    def __post_init__(self):
        if self.grid.ndim != 3:
            raise ValueError("stencil grid must be 3D")
        if self.message_bytes < 0 or self.iterations < 1:
            raise ValueError("message_bytes must be >= 0 and iterations >= 1")


def stencil_edges(grid: CartesianGrid) -> np.ndarray:
    """All undirected ±x/±y/±z neighbour pairs of a row-major grid, shape (E, 2)."""
    nx, ny, nz = grid.dims
    ids = np.arange(nx * ny * nz).reshape(nx, ny, nz)
    pairs = [
        np.stack([ids[:-1, :, :].ravel(), ids[1:, :, :].ravel()], axis=1),
        np.stack([ids[:, :-1, :].ravel(), ids[:, 1:, :].ravel()], axis=1),
        np.stack([ids[:, :, :-1].ravel(), ids[:, :, 1:].ravel()], axis=1),
    ]
    return np.concatenate(pairs, axis=0)


def _node_levels(unit_nodes: Sequence[str], topo: HierTopology, edges: np.ndarray) -> np.ndarray:
    index = topo.index_of()
    try:
        node_idx = np.array([index[n] for n in unit_nodes], dtype=np.int64)
    except KeyError as exc:
        raise InconsistentMapping(f"unit placed on unknown node {exc.args[0]!r}") from None
    # level between every pair of nodes that actually exchange messages
    a, b = node_idx[edges[:, 0]], node_idx[edges[:, 1]]
    cache: dict[tuple[int, int], int] = {}
    levels = np.empty(len(edges), dtype=np.int64)
    for k, (i, j) in enumerate(zip(a.tolist(), b.tolist())):
        key = (i, j) if i <= j else (j, i)
        lvl = cache.get(key)
        if lvl is None:
            lvl = topo.level(topo.nodes[key[0]].node_id, topo.nodes[key[1]].node_id)
            cache[key] = lvl
        levels[k] = lvl
    return levels


def _as_unit_nodes(unit_to_node: Mapping[int, str] | Sequence[str], n_units: int) -> list[str]:
    nodes = []
    for u in range(n_units):
        try:
            node = unit_to_node[u]
        except (KeyError, IndexError):
            node = None
        if node is None or node == "":
            raise InconsistentMapping(f"unit {u} has no node assignment")
        nodes.append(node)
    return nodes


def message_levels(
    grid: CartesianGrid,
    unit_to_node: Mapping[int, str] | Sequence[str],
    topo: HierTopology,
) -> np.ndarray:
    """Hierarchy level of every stencil edge, in :func:`stencil_edges` order."""
    edges = stencil_edges(grid)
    return _node_levels(_as_unit_nodes(unit_to_node, grid.size), topo, edges)


@dataclass(frozen=True)
class StencilCost:
    """Per-unit level histogram of a placement, evaluated lazily per message size.

    ``counts[u, level]`` is the number of neighbours of unit ``u`` reached
    through ``level``; column 5 counts inter-socket neighbours on one node
    (only populated when socket information was given).
    """

    counts: np.ndarray
    model: LatencyModel = field(compare=False)

    def _level_cost_vector(self, nbytes: float) -> np.ndarray:
        costs = self.model.level_costs(nbytes)
        numa = self.model.numa_alpha
        numa_cost = (numa if numa is not None else self.model.alpha[0]) + nbytes * self.model.inv_bw[0]
        return np.append(costs, numa_cost)

    def per_unit(self, nbytes: float) -> np.ndarray:
        return self.counts @ self._level_cost_vector(nbytes)

    def iteration_max(self, nbytes: float) -> float:
        per_unit = self.per_unit(nbytes)
        return float(per_unit.max()) if per_unit.size else 0.0

    def iteration_sum(self, nbytes: float) -> float:
        return float(self.per_unit(nbytes).sum())


def _stencil_counts(
    grid: CartesianGrid,
    unit_nodes: Sequence[str],
    topo: HierTopology,
    unit_sockets: Sequence[int] | None,
) -> np.ndarray:
    edges = stencil_edges(grid)
    levels = _node_levels(unit_nodes, topo, edges)
    if unit_sockets is not None:
        sockets = np.asarray(unit_sockets)
        numa = (levels == 0) & (sockets[edges[:, 0]] != sockets[edges[:, 1]])
        levels = np.where(numa, NUM_LEVELS, levels)
    counts = np.zeros((grid.size, NUM_LEVELS + 1), dtype=np.int64)
    # each undirected edge is one message in each direction
    np.add.at(counts, (edges[:, 0], levels), 1)
    np.add.at(counts, (edges[:, 1], levels), 1)
    return counts


def prepare_stencil(
    grid: CartesianGrid,
    unit_to_node: Mapping[int, str] | Sequence[str],
    topo: HierTopology,
    model: LatencyModel,
    unit_sockets: Sequence[int] | None = None,
) -> StencilCost:
    unit_nodes = _as_unit_nodes(unit_to_node, grid.size)
    return StencilCost(_stencil_counts(grid, unit_nodes, topo, unit_sockets), model)


def stencil_cost(
    spec: StencilSpec,
    unit_to_node: Mapping[int, str] | Sequence[str],
    topo: HierTopology,
    model: LatencyModel,
    unit_sockets: Sequence[int] | None = None,
) -> float:
    """Cost in µs of one bulk-synchronous exchange round.

    Each unit pays for its blocking puts in sequence; the round finishes
    with the slowest unit.

    Args:
        unit_to_node: Node id of every cell of ``spec.grid`` (row-major unit id).
        unit_sockets: Optional socket index of every unit, to charge
            ``numa_alpha`` between sockets of a node.
    """
    return prepare_stencil(spec.grid, unit_to_node, topo, model, unit_sockets).iteration_max(spec.message_bytes)


@dataclass(frozen=True)
class ImprovementRow:
    message_bytes: int
    cost_default: float
    cost_hier: float
    sum_default: float
    sum_hier: float

    @property
    def factor(self) -> float:
        if self.cost_hier == 0:
            return 1.0
        return self.cost_default / self.cost_hier


def _sockets(mapping: UnitMapping, topo: HierTopology) -> list[int]:
    # units are bound to cores in order, so the core index within the node is
    # the rank of the original unit among those on its node
    cps = topo.cores_per_socket
    seen: dict[str, int] = {}
    by_new = [0] * mapping.total_units
    for orig, new in enumerate(mapping.perm):
        node = mapping.unit_nodes[orig]
        core = seen.get(node, 0)
        seen[node] = core + 1
        by_new[new] = core // cps
    return by_new


def improvement_factor(
    spec: StencilSpec,
    topo: HierTopology,
    model: LatencyModel,
    message_sizes: Sequence[int] | None = None,
    total_units: int | None = None,
    hier: UnitMapping | None = None,
) -> list[ImprovementRow]:
    """Default-over-hierarchical stencil cost ratio for each message size.

    Both placements run on the grid chosen by :func:`compute_mapping`; the
    default placement keeps launcher order (node-major over sorted nodes).
    ``spec.grid`` and ``spec.message_bytes`` are superseded by the mapping
    grid and ``message_sizes``.
    """
    if message_sizes is None:
        message_sizes = default_message_sizes()
    if hier is None:
        hier = compute_mapping(topo, total_units)
    default = identity_mapping(topo, hier.total_units)
    grid = hier.nt
    use_sockets = model.numa_alpha is not None
    costs = []
    for mapping in (default, hier):
        sockets = _sockets(mapping, topo) if use_sockets else None
        costs.append(prepare_stencil(grid, mapping.placement(), topo, model, sockets))
    d, h = costs
    return [
        ImprovementRow(
            int(s),
            d.iteration_max(s),
            h.iteration_max(s),
            d.iteration_sum(s),
            h.iteration_sum(s),
        )
        for s in message_sizes
    ]


@dataclass(frozen=True)
class CopySimulation:
    completion: float
    timeline: tuple[tuple[int, float, float], ...]
    """``(op index, start, end)`` in µs for every op of the plan."""


def simulate_copy_plan(
    plan: CopyPlan,
    placement: Mapping[int, str] | Sequence[str],
    topo: HierTopology,
    model: LatencyModel,
    viewer: int | None = None,
) -> CopySimulation:
    """Completion time of a copy plan issued by ``viewer``.

    Direct memory copies cost ``bytes * inv_bw[0]`` and run back to back on
    the viewer. Chunks from one source unit are serialised; different
    sources proceed in parallel, and in parallel with the direct copies.
    """
    viewer = plan.viewer if viewer is None else viewer
    if plan.ops and viewer is None:
        raise ValueError("copy plan simulation needs the viewing unit")
    direct_clock = 0.0
    source_clock: dict[int, float] = {}
    timeline = []
    for k, op in enumerate(plan.ops):
        nbytes = plan.op_bytes(op)
        if op.kind is OpKind.DIRECT_MEMORY:
            start = direct_clock
            direct_clock += nbytes * model.inv_bw[0]
            timeline.append((k, start, direct_clock))
        else:
            level = topo.level(placement[viewer], placement[op.source_unit])
            start = source_clock.get(op.source_unit, 0.0)
            end = start + message_cost(model, level, nbytes)
            source_clock[op.source_unit] = end
            timeline.append((k, start, end))
    completion = max([direct_clock, *source_clock.values()], default=0.0)
    return CopySimulation(completion, tuple(timeline))


def contiguous_unit_nodes(topo: HierTopology, n_units: int) -> list[str]:
    """Node of each unit when units fill sorted nodes in order."""
    upn = topo.units_per_node
    if n_units > topo.capacity:
        raise InconsistentMapping(f"{n_units} units exceed the {topo.capacity} cores of the allocation")
    return [topo.nodes[u // upn].node_id for u in range(n_units)]


def ratio_summary(rows: Sequence[ImprovementRow]) -> tuple[float, float, float]:
    factors = [r.factor for r in rows]
    return min(factors), math.fsum(factors) / len(factors), max(factors)
