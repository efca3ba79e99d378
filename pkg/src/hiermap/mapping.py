"""Hierarchical unit reordering for nearest-neighbour codes.

Units are laid out on a 3D Cartesian grid ``NT`` in row-major order. The
reordering hands every node an axis-aligned brick ``N0`` of that grid and
groups node bricks into blade, chassis, group and machine bricks
(``N1`` .. ``N4``) so that units which talk to each other end up on nodes
sharing as low a network level as possible.

The nested traversal in :func:`compute_mapping` walks the sorted node list
in order; node ``n`` owns original units ``n*upn .. (n+1)*upn - 1``
(units are assumed bound to cores, node-major). The new id of each unit is
the row-major index of its cell inside the assigned brick.

Level grids:

====  ====  ===================================================
name  dims  extents along
====  ====  ===================================================
N0    3     units per node (x, y, z)
N1    2     nodes per blade (y, z)
N2    3     blades per chassis (x, y, z)
N3    3     chassis per group (x, y, z)
N4    3     groups (x, y, z)
====  ====  ===================================================
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Sequence, TextIO

from .errors import DivisibilityError, MappingOverflow, OutOfRange
from .grid import CartesianGrid, balanced_divisible_factorization, balanced_factorization, divisors
from .topology import HierTopology

__all__ = [
    "LevelGrids",
    "UnitMapping",
    "derive_level_grids",
    "compute_mapping",
    "identity_mapping",
    "apply_mapping",
    "unit_to_grid_coord",
    "write_mapping_csv",
    "MAPPING_CSV_HEADER",
]

log = logging.getLogger(__name__)

MAPPING_CSV_HEADER = ("original_id", "new_id", "node_id", "x", "y", "z")


@dataclass(frozen=True)
class LevelGrids:
    nt: CartesianGrid
    n0: CartesianGrid
    n1: CartesianGrid
    n2: CartesianGrid
    n3: CartesianGrid
    n4: CartesianGrid

    def composed(self) -> tuple[int, int, int]:
        """Extents of the full brick hierarchy along x, y, z."""
        n0, n1, n2, n3, n4 = self.n0, self.n1, self.n2, self.n3, self.n4
        return (
            n0[0] * n2[0] * n3[0] * n4[0],
            n0[1] * n1[0] * n2[1] * n3[1] * n4[1],
            n0[2] * n1[1] * n2[2] * n3[2] * n4[2],
        )

    def summary(self) -> str:
        names = ("NT", "N0", "N1", "N2", "N3", "N4")
        grids = (self.nt, self.n0, self.n1, self.n2, self.n3, self.n4)
        return " ".join(f"{n}={g}" for n, g in zip(names, grids))


@dataclass(frozen=True)
class UnitMapping:
    """Result of a reordering.

    ``perm[original_id]`` is the new unit id. ``unit_nodes[original_id]``
    is the node the original unit is bound to.
    """

    total_units: int
    perm: tuple[int, ...]
    grids: LevelGrids
    unit_nodes: tuple[str, ...]
    fallback: bool = False

    @property
    def nt(self) -> CartesianGrid:
        return self.grids.nt

    @property
    def n0(self) -> CartesianGrid:
        return self.grids.n0

    def inverse(self) -> list[int]:
        inv = [0] * self.total_units
        for orig, new in enumerate(self.perm):
            inv[new] = orig
        return inv

    def placement(self) -> list[str]:
        """Node id hosting each *new* unit id, i.e. each cell of the ``NT`` grid."""
        nodes = [""] * self.total_units
        for orig, new in enumerate(self.perm):
            nodes[new] = self.unit_nodes[orig]
        return nodes


def _fit_block(limits: Sequence[int], target: int) -> tuple[int, ...]:
    # Largest block <= target whose extents divide the free extents; ties go
    # to the most even shape, then to the lexicographically largest.
    best_key, best = None, None
    for shape in itertools.product(*(divisors(x) for x in limits)):
        size = math.prod(shape)
        if size > target:
            continue
        key = (-size, max(shape) - min(shape), tuple(-s for s in shape))
        if best_key is None or key < best_key:
            best_key, best = key, shape
    return best


def _used_nodes(topo: HierTopology, total_units: int) -> tuple[int, int]:
    if total_units < 1:
        raise ValueError("total_units must be positive")
    if total_units > topo.capacity:
        raise OutOfRange(
            f"{total_units} units do not fit on {topo.num_nodes} nodes x {topo.units_per_node} cores"
        )
    upn = topo.units_per_node
    n_nodes = -(-total_units // upn)
    if n_nodes == 1:
        return 1, total_units
    if total_units % upn:
        raise DivisibilityError(
            f"{total_units} units leave a partially filled node ({upn} units per node)"
        )
    return n_nodes, upn


def derive_level_grids(topo: HierTopology, total_units: int) -> LevelGrids:
    """Pick ``NT`` and the per-level brick grids for an allocation.

    ``N0`` is the balanced 3D split of units per node. ``NT`` is the balanced
    split of ``total_units``; if ``N0`` does not tile it, the most balanced
    split that ``N0`` does tile is used instead. The node grid ``NT / N0``
    is then carved bottom-up: each level takes the largest block that fits
    the remaining extents without holding more nodes than the busiest
    blade, chassis or group of the allocation does, and ``N4`` absorbs whatever is left so the composed brick
    hierarchy equals ``NT`` exactly.

    Raises:
        DivisibilityError: If the units cannot fill whole nodes.
    """
    n_nodes, upn = _used_nodes(topo, total_units)
    n0 = balanced_factorization(upn, 3)
    nt = balanced_divisible_factorization(total_units, n0)
    if nt is None:
        raise DivisibilityError(f"no 3D split of {total_units} units is tiled by N0={n0}")
    free = [t // b for t, b in zip(nt, n0)]
    per_blade, per_chassis, per_group, _ = topo.take(n_nodes).nodes_per_block

    n1 = _fit_block(free[1:], per_blade)
    free[1] //= n1[0]
    free[2] //= n1[1]
    placed = math.prod(n1)
    n2 = _fit_block(free, max(1, per_chassis // placed))
    free = [f // b for f, b in zip(free, n2)]
    placed *= math.prod(n2)
    n3 = _fit_block(free, max(1, per_group // placed))
    free = [f // b for f, b in zip(free, n3)]

    grids = LevelGrids(
        nt=nt,
        n0=n0,
        n1=CartesianGrid(n1),
        n2=CartesianGrid(n2),
        n3=CartesianGrid(n3),
        n4=CartesianGrid(free),
    )
    assert grids.composed() == nt.dims
    return grids


def _traverse(grids: LevelGrids, total_units: int) -> list[int]:
    nt, n0, n1, n2, n3, n4 = grids.nt, grids.n0, grids.n1, grids.n2, grids.n3, grids.n4
    sx, sy = nt[1] * nt[2], nt[2]

    # brick extents per axis at each level
    bx2 = n2[0] * n0[0]
    bx3 = n3[0] * bx2
    by1 = n1[0] * n0[1]
    by2 = n2[1] * by1
    by3 = n3[1] * by2
    bz1 = n1[1] * n0[2]
    bz2 = n2[2] * bz1
    bz3 = n3[2] * bz2

    unit_id = [0] * total_units
    unit_number = 0
    for x, y, z in itertools.product(*map(range, n4)):
        fourth = x * bx3 * sx + y * by3 * sy + z * bz3
        for a, b, c in itertools.product(*map(range, n3)):
            third = a * bx2 * sx + b * by2 * sy + c * bz2
            for d, e, f in itertools.product(*map(range, n2)):
                second = d * n0[0] * sx + e * by1 * sy + f * bz1
                for g, h in itertools.product(*map(range, n1)):
                    first = g * n0[1] * sy + h * n0[2]
                    base = fourth + third + second + first
                    for i, j, k in itertools.product(*map(range, n0)):
                        if unit_number >= total_units:
                            break
                        new_id = base + i * sx + j * sy + k
                        if new_id >= total_units:
                            raise MappingOverflow(
                                f"unit {unit_number} mapped to {new_id} >= {total_units}"
                            )
                        unit_id[unit_number] = new_id
                        unit_number += 1
    return unit_id


def _original_slots(
    topo: HierTopology, total_units: int, upn: int, original_order: Sequence[str] | None
) -> tuple[list[int], tuple[str, ...]]:
    # slot = sorted_node_index * upn + rank of the unit among those on its node
    if original_order is None:
        nodes = tuple(topo.nodes[u // upn].node_id for u in range(total_units))
        return list(range(total_units)), nodes
    if len(original_order) != total_units:
        raise ValueError(
            f"original order lists {len(original_order)} units, expected {total_units}"
        )
    index = topo.index_of()
    seen: dict[str, int] = {}
    slots = []
    for node_id in original_order:
        if node_id not in index:
            raise ValueError(f"unit bound to unknown node {node_id!r}")
        rank = seen.get(node_id, 0)
        if rank >= upn:
            raise ValueError(f"more than {upn} units bound to node {node_id!r}")
        seen[node_id] = rank + 1
        slots.append(index[node_id] * upn + rank)
    if sorted(slots) != list(range(total_units)):
        raise ValueError("original order must fill the first sorted nodes completely")
    return slots, tuple(original_order)


def identity_mapping(
    topo: HierTopology, total_units: int, original_order: Sequence[str] | None = None
) -> UnitMapping:
    """Launcher placement: unit ids unchanged, units node-major over sorted nodes."""
    upn = min(topo.units_per_node, total_units)
    if original_order is None:
        nodes = tuple(topo.nodes[u // topo.units_per_node].node_id for u in range(total_units))
    else:
        if len(original_order) != total_units:
            raise ValueError(
                f"original order lists {len(original_order)} units, expected {total_units}"
            )
        nodes = tuple(original_order)
    ones = CartesianGrid.ones(3)
    grids = LevelGrids(
        nt=balanced_factorization(total_units, 3),
        n0=balanced_factorization(upn, 3),
        n1=CartesianGrid.ones(2),
        n2=ones,
        n3=ones,
        n4=ones,
    )
    return UnitMapping(total_units, tuple(range(total_units)), grids, nodes, fallback=True)


def compute_mapping(
    topo: HierTopology,
    total_units: int | None = None,
    original_order: Sequence[str] | None = None,
    strict: bool = False,
) -> UnitMapping:
    """Compute the hierarchical permutation of unit ids.

    Args:
        topo: Sorted allocation.
        total_units: Number of units; defaults to every core of every node.
        original_order: Node id of each original unit, if the launcher did
            not place units node-major over the sorted node list.
        strict: Re-raise :class:`DivisibilityError` instead of falling back
            to the identity mapping.
    """
    if total_units is None:
        total_units = topo.capacity
    try:
        grids = derive_level_grids(topo, total_units)
    except DivisibilityError as exc:
        if strict:
            raise
        warnings.warn(f"hierarchical mapping unavailable, keeping launcher order: {exc}", stacklevel=2)
        return identity_mapping(topo, total_units, original_order)

    upn = grids.n0.size
    unit_id = _traverse(grids, total_units)
    slots, nodes = _original_slots(topo, total_units, upn, original_order)
    perm = tuple(unit_id[s] for s in slots)
    log.debug("hierarchical mapping: %s", grids.summary())
    return UnitMapping(total_units, perm, grids, nodes)


def apply_mapping(mapping: UnitMapping, original_id: int) -> int:
    if not 0 <= original_id < mapping.total_units:
        raise OutOfRange(f"unit {original_id} outside [0, {mapping.total_units})")
    return mapping.perm[original_id]


def unit_to_grid_coord(mapping: UnitMapping, new_id: int) -> tuple[int, int, int]:
    if not 0 <= new_id < mapping.total_units:
        raise OutOfRange(f"unit {new_id} outside [0, {mapping.total_units})")
    _, ny, nz = mapping.nt
    return (new_id // (ny * nz), (new_id // nz) % ny, new_id % nz)


def iter_mapping_rows(mapping: UnitMapping) -> Iterator[tuple]:
    for orig, new in enumerate(mapping.perm):
        yield (orig, new, mapping.unit_nodes[orig], *unit_to_grid_coord(mapping, new))


def write_mapping_csv(mapping: UnitMapping, stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(MAPPING_CSV_HEADER)
    writer.writerows(iter_mapping_rows(mapping))
