"""Node placement parsing and network hierarchy classification.

A Cray XC placement string such as ``c11-2c0s15n3`` locates a node by
cabinet column, cabinet row, chassis, blade slot and node position on the
blade. Those five coordinates, read left to right, are the hierarchy levels
4 down to 0 used for sorting allocated nodes.

Hierarchy levels returned by :func:`level_of_common_ancestor`:

====== =========================================================
level  meaning
====== =========================================================
0      same node
1      same compute blade (shared Aries chip)
2      same chassis (rank-1 backplane)
3      same group (rank-2 copper network, two cabinets by default)
4      different groups (rank-3 optical network)
====== =========================================================
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence, TextIO

from .errors import DuplicateNode, ParseError, RaggedAllocation

__all__ = [
    "NodePlacement",
    "NodeRecord",
    "HierTopology",
    "CabinetPairGrouping",
    "parse_placement",
    "format_placement",
    "load_topology_file",
    "dump_topology_file",
    "sort_nodes",
    "level_of_common_ancestor",
    "build_topology",
]

NUM_LEVELS = 5


@dataclass(frozen=True, order=True)
class NodePlacement:
    """Machine coordinates of a node, ordered from the top hierarchy level down."""

    column: int
    row: int
    chassis: int
    blade: int
    node: int

    def __post_init__(self):
        for name in ("column", "row", "chassis", "blade", "node"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {value!r}")

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.column, self.row, self.chassis, self.blade, self.node)

    def __str__(self) -> str:
        return format_placement(self)


def format_placement(p: NodePlacement) -> str:
    return f"c{p.column}-{p.row}c{p.chassis}s{p.blade}n{p.node}"


# (leading sigil, field name); the row field is introduced by '-' not a letter
_PLACEMENT_GRAMMAR = (("c", "column"), ("-", "row"), ("c", "chassis"), ("s", "blade"), ("n", "node"))


def parse_placement(text: str) -> NodePlacement:
    """Parse ``c<col>-<row>c<chassis>s<blade>n<node>``.

    Raises:
        ParseError: On any deviation from the grammar. ``offset`` is the
            position of the first character that does not fit.
    """
    pos = 0
    values = {}
    for sigil, name in _PLACEMENT_GRAMMAR:
        if pos >= len(text) or text[pos] != sigil:
            got = repr(text[pos]) if pos < len(text) else "end of input"
            raise ParseError(f"expected {sigil!r} before {name} in {text!r}, got {got}", offset=pos)
        pos += 1
        start = pos
        while pos < len(text) and "0" <= text[pos] <= "9":
            pos += 1
        if pos == start:
            raise ParseError(f"expected digits for {name} in {text!r}", offset=pos)
        values[name] = int(text[start:pos])
    if pos != len(text):
        raise ParseError(f"trailing characters in {text!r}", offset=pos)
    return NodePlacement(**values)


@dataclass(frozen=True)
class NodeRecord:
    node_id: str
    placement: NodePlacement
    sockets: int
    cores_per_socket: int

    def __post_init__(self):
        if self.sockets < 1 or self.cores_per_socket < 1:
            raise ValueError(
                f"node {self.node_id}: sockets and cores_per_socket must be positive"
            )

    @property
    def cores(self) -> int:
        return self.sockets * self.cores_per_socket


def load_topology_file(stream: TextIO | Iterable[str]) -> dict[str, NodeRecord]:
    """Read a topology file into a ``node_id -> NodeRecord`` mapping.

    Each record line holds four whitespace separated columns::

        <node_id> <placement> <sockets> <cores_per_socket>

    Blank lines are skipped and ``#`` starts a comment. Insertion order of
    the returned dict follows the file.
    """
    records: dict[str, NodeRecord] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        cols = line.split()
        if len(cols) != 4:
            raise ParseError(f"expected 4 columns, found {len(cols)}", line=lineno)
        node_id, placement_text, sockets_text, cores_text = cols
        try:
            placement = parse_placement(placement_text)
        except ParseError as exc:
            raise ParseError(f"bad placement: {exc}", offset=exc.offset, line=lineno) from None
        try:
            sockets = int(sockets_text)
            cores_per_socket = int(cores_text)
        except ValueError:
            raise ParseError("sockets and cores_per_socket must be integers", line=lineno) from None
        if sockets < 1 or cores_per_socket < 1:
            raise ParseError("sockets and cores_per_socket must be positive", line=lineno)
        if node_id in records:
            raise DuplicateNode(node_id, line=lineno)
        records[node_id] = NodeRecord(node_id, placement, sockets, cores_per_socket)
    return records


def dump_topology_file(records: Iterable[NodeRecord], stream: TextIO, header: str | None = None) -> None:
    if header:
        for line in header.splitlines():
            stream.write(f"# {line}\n")
    for rec in records:
        stream.write(f"{rec.node_id} {rec.placement} {rec.sockets} {rec.cores_per_socket}\n")


def sort_nodes(records: Iterable[NodeRecord]) -> list[NodeRecord]:
    """Sort by (column, row, chassis, blade, node); stable for equal keys."""
    return sorted(records, key=lambda r: r.placement.as_tuple())


@dataclass(frozen=True)
class CabinetPairGrouping:
    """Map a cabinet to its group id.

    Groups are ``columns_per_group`` adjacent cabinet columns in one row;
    the XC40 default is two cabinets per group.
    """

    columns_per_group: int = 2

    def __call__(self, p: NodePlacement) -> Hashable:
        return (p.row, p.column // self.columns_per_group)


GroupingRule = Callable[[NodePlacement], Hashable]
DEFAULT_GROUPING = CabinetPairGrouping()


def level_of_common_ancestor(
    a: NodePlacement, b: NodePlacement, grouping: GroupingRule = DEFAULT_GROUPING
) -> int:
    if a == b:
        return 0
    if (a.column, a.row, a.chassis, a.blade) == (b.column, b.row, b.chassis, b.blade):
        return 1
    if (a.column, a.row, a.chassis) == (b.column, b.row, b.chassis):
        return 2
    if grouping(a) == grouping(b):
        return 3
    return 4


@dataclass(frozen=True)
class HierTopology:
    """Sorted allocation with observed per-level block counts.

    ``level_extents[k - 1]`` for k in 1..4 is the largest number of
    level-(k-1) blocks seen inside one level-k block: nodes per blade,
    blades per chassis, chassis per group, and for k = 4 the number of
    groups touched by the allocation.
    """

    nodes: tuple[NodeRecord, ...]
    level_extents: tuple[int, int, int, int]
    units_per_node: int
    grouping: GroupingRule = field(default=DEFAULT_GROUPING, compare=False)

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def capacity(self) -> int:
        return len(self.nodes) * self.units_per_node

    @property
    def cores_per_socket(self) -> int:
        return self.nodes[0].cores_per_socket if self.nodes else 1

    @property
    def nodes_per_block(self) -> tuple[int, int, int, int]:
        """Largest node count inside one blade, chassis, group, and the whole allocation."""
        cache = self.__dict__.get("_npb_cache")
        if cache is None:
            cache = _nodes_per_block(self.nodes, self.grouping)
            object.__setattr__(self, "_npb_cache", cache)
        return cache

    def index_of(self) -> dict[str, int]:
        return {rec.node_id: i for i, rec in enumerate(self.nodes)}

    def level(self, node_a: str, node_b: str) -> int:
        pa = self._placements()[node_a]
        pb = self._placements()[node_b]
        return level_of_common_ancestor(pa, pb, self.grouping)

    def _placements(self) -> dict[str, NodePlacement]:
        cache = self.__dict__.get("_placement_cache")
        if cache is None:
            cache = {rec.node_id: rec.placement for rec in self.nodes}
            object.__setattr__(self, "_placement_cache", cache)
        return cache

    def take(self, n_nodes: int) -> HierTopology:
        """Topology restricted to the first ``n_nodes`` sorted nodes."""
        if n_nodes == len(self.nodes):
            return self
        return build_topology(self.nodes[:n_nodes], grouping=self.grouping)


def _observed_extents(nodes: Sequence[NodeRecord], grouping: GroupingRule) -> tuple[int, int, int, int]:
    if not nodes:
        return (1, 1, 1, 1)
    per_blade: dict[tuple, set] = defaultdict(set)
    per_chassis: dict[tuple, set] = defaultdict(set)
    per_group: dict[Hashable, set] = defaultdict(set)
    for rec in nodes:
        p = rec.placement
        chassis_key = (p.column, p.row, p.chassis)
        per_blade[chassis_key + (p.blade,)].add(p.node)
        per_chassis[chassis_key].add(p.blade)
        per_group[grouping(p)].add(chassis_key)
    return (
        max(len(v) for v in per_blade.values()),
        max(len(v) for v in per_chassis.values()),
        max(len(v) for v in per_group.values()),
        len(per_group),
    )


def _nodes_per_block(nodes: Sequence[NodeRecord], grouping: GroupingRule) -> tuple[int, int, int, int]:
    if not nodes:
        return (1, 1, 1, 1)
    blades: dict[tuple, int] = defaultdict(int)
    chassis: dict[tuple, int] = defaultdict(int)
    groups: dict[Hashable, int] = defaultdict(int)
    for rec in nodes:
        p = rec.placement
        blades[(p.column, p.row, p.chassis, p.blade)] += 1
        chassis[(p.column, p.row, p.chassis)] += 1
        groups[grouping(p)] += 1
    return (max(blades.values()), max(chassis.values()), max(groups.values()), len(nodes))


def build_topology(
    records: Iterable[NodeRecord], grouping: GroupingRule = DEFAULT_GROUPING
) -> HierTopology:
    """Sort allocated nodes and derive per-level extents.

    Raises:
        RaggedAllocation: If nodes differ in their core counts.
    """
    nodes = tuple(sort_nodes(records))
    core_counts = {rec.cores for rec in nodes}
    if len(core_counts) > 1:
        raise RaggedAllocation(
            f"allocated nodes have differing core counts {sorted(core_counts)}"
        )
    upn = core_counts.pop() if core_counts else 1
    return HierTopology(nodes, _observed_extents(nodes, grouping), upn, grouping)
