"""Data distribution patterns and constraint-driven pattern deduction.

A pattern splits an n-dimensional index space over a Cartesian team of
units. Along every dimension the extent is cut into blocks of a fixed
size; blocks are dealt to unit coordinates either one block per unit
(``blocked``) or round-robin (``block-cyclic``). Unit ranks are row-major
over the team grid and local storage is row-major over the locally owned
index set.

Constraint tags:

============  =====================  ========================================
category      tag                    holds when
============  =====================  ========================================
partitioning  balanced               all blocks have identical extents
mapping       balanced               every unit owns the same number of blocks
mapping       compact                unit ranks of a node are contiguous
mapping       node_balanced          accepted, not implemented (never holds)
layout        row_major              local elements stored row-major
============  =====================  ========================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import OutOfRange, UnknownTag, Unsatisfiable

__all__ = [
    "SizeSpec",
    "TeamSpec",
    "DistConstraints",
    "Scheme",
    "Pattern",
    "TAG_REGISTRY",
    "check_constraints",
    "violated_constraint",
    "make_pattern",
    "unit_at",
    "local_index",
]

TAG_REGISTRY: dict[str, frozenset[str]] = {
    "partitioning": frozenset({"balanced"}),
    "mapping": frozenset({"balanced", "compact", "node_balanced"}),
    "layout": frozenset({"row_major"}),
}


@dataclass(frozen=True)
class SizeSpec:
    extents: tuple[int, ...]

    def __init__(self, *extents: int | Sequence[int]):
        if len(extents) == 1 and not isinstance(extents[0], int):
            extents = tuple(extents[0])
        if not extents or any(int(e) < 1 for e in extents):
            raise ValueError(f"extents must be positive, got {extents}")
        object.__setattr__(self, "extents", tuple(int(e) for e in extents))

    @property
    def ndim(self) -> int:
        return len(self.extents)

    @property
    def size(self) -> int:
        return math.prod(self.extents)


@dataclass(frozen=True)
class TeamSpec:
    unit_grid: tuple[int, ...]

    def __init__(self, *unit_grid: int | Sequence[int]):
        if len(unit_grid) == 1 and not isinstance(unit_grid[0], int):
            unit_grid = tuple(unit_grid[0])
        if not unit_grid or any(int(u) < 1 for u in unit_grid):
            raise ValueError(f"team extents must be positive, got {unit_grid}")
        object.__setattr__(self, "unit_grid", tuple(int(u) for u in unit_grid))

    @property
    def ndim(self) -> int:
        return len(self.unit_grid)

    @property
    def size(self) -> int:
        return math.prod(self.unit_grid)


@dataclass(frozen=True)
class DistConstraints:
    partitioning: frozenset[str] = field(default_factory=frozenset)
    mapping: frozenset[str] = field(default_factory=frozenset)
    layout: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        for category in TAG_REGISTRY:
            tags = frozenset(getattr(self, category))
            object.__setattr__(self, category, tags)
            unknown = tags - TAG_REGISTRY[category]
            if unknown:
                raise UnknownTag(f"unknown {category} tag(s): {', '.join(sorted(unknown))}")

    @classmethod
    def balanced(cls) -> DistConstraints:
        return cls(partitioning=frozenset({"balanced"}), mapping=frozenset({"balanced"}))

    @classmethod
    def parse(cls, specs: Iterable[str]) -> DistConstraints:
        """Build from ``"category:tag"`` strings, e.g. ``"mapping:balanced"``."""
        tags: dict[str, set[str]] = {c: set() for c in TAG_REGISTRY}
        for spec in specs:
            category, sep, tag = spec.partition(":")
            if not sep or category not in tags:
                raise UnknownTag(f"expected '<category>:<tag>' with category in {sorted(tags)}, got {spec!r}")
            tags[category].add(tag)
        return cls(**{c: frozenset(t) for c, t in tags.items()})

    def items(self) -> list[tuple[str, str]]:
        return [(c, t) for c in TAG_REGISTRY for t in sorted(getattr(self, c))]


class Scheme(str, Enum):
    BLOCKED = "blocked"
    BLOCK_CYCLIC = "block-cyclic"


@dataclass(frozen=True)
class Pattern:
    sizespec: SizeSpec
    teamspec: TeamSpec
    blocking: tuple[int, ...]
    scheme: Scheme = Scheme.BLOCKED

    def __post_init__(self):
        if self.sizespec.ndim != self.teamspec.ndim or len(self.blocking) != self.sizespec.ndim:
            raise ValueError("sizespec, teamspec and blocking must have the same dimensionality")
        if any(b < 1 for b in self.blocking):
            raise ValueError(f"block extents must be positive, got {self.blocking}")
        if self.scheme is Scheme.BLOCKED:
            expected = blocked_extents(self.sizespec, self.teamspec)
            if tuple(self.blocking) != expected:
                raise ValueError(f"blocked pattern needs block extents {expected}, got {self.blocking}")

    @classmethod
    def blocked(cls, sizespec: SizeSpec, teamspec: TeamSpec) -> Pattern:
        return cls(sizespec, teamspec, blocked_extents(sizespec, teamspec), Scheme.BLOCKED)

    @classmethod
    def block_cyclic(cls, sizespec: SizeSpec, teamspec: TeamSpec, blocking: Sequence[int]) -> Pattern:
        return cls(sizespec, teamspec, tuple(blocking), Scheme.BLOCK_CYCLIC)

    @property
    def ndim(self) -> int:
        return self.sizespec.ndim

    @property
    def team_size(self) -> int:
        return self.teamspec.size

    @property
    def size(self) -> int:
        return self.sizespec.size

    def num_blocks(self) -> tuple[int, ...]:
        return tuple(-(-e // b) for e, b in zip(self.sizespec.extents, self.blocking))

    def _owner_coord(self, d: int, i: int) -> int:
        block = i // self.blocking[d]
        return block % self.teamspec.unit_grid[d]

    def _local_extent(self, d: int, u: int) -> int:
        e, b, t = self.sizespec.extents[d], self.blocking[d], self.teamspec.unit_grid[d]
        # blocks u, u+t, u+2t, ... of which only the last may be partial
        owned = range(u, -(-e // b), t)
        return sum(min(b, e - blk * b) for blk in owned)

    def _local_coord(self, d: int, i: int) -> int:
        b, t = self.blocking[d], self.teamspec.unit_grid[d]
        return (i // b // t) * b + i % b

    def unit_coords(self, rank: int) -> tuple[int, ...]:
        if not 0 <= rank < self.team_size:
            raise OutOfRange(f"unit {rank} outside team of {self.team_size}")
        coords = []
        for t in reversed(self.teamspec.unit_grid):
            coords.append(rank % t)
            rank //= t
        return tuple(reversed(coords))

    def local_extents(self, rank: int) -> tuple[int, ...]:
        return tuple(self._local_extent(d, u) for d, u in enumerate(self.unit_coords(rank)))

    def local_size(self, rank: int) -> int:
        return math.prod(self.local_extents(rank))

    def blocks_of(self, rank: int) -> int:
        counts = self.num_blocks()
        n = 1
        for d, u in enumerate(self.unit_coords(rank)):
            n *= len(range(u, counts[d], self.teamspec.unit_grid[d]))
        return n

    def coords(self, linear: int) -> tuple[int, ...]:
        if not 0 <= linear < self.size:
            raise OutOfRange(f"index {linear} outside [0, {self.size})")
        out = []
        for e in reversed(self.sizespec.extents):
            out.append(linear % e)
            linear //= e
        return tuple(reversed(out))

    def describe(self) -> str:
        return f"{self.scheme.value} {'x'.join(map(str, self.blocking))}"


def blocked_extents(sizespec: SizeSpec, teamspec: TeamSpec) -> tuple[int, ...]:
    return tuple(-(-e // t) for e, t in zip(sizespec.extents, teamspec.unit_grid))


def _check_index(p: Pattern, index: Sequence[int] | int) -> tuple[int, ...]:
    if isinstance(index, int):
        if p.ndim != 1:
            return p.coords(index)
        index = (index,)
    index = tuple(index)
    if len(index) != p.ndim or any(not 0 <= i < e for i, e in zip(index, p.sizespec.extents)):
        raise OutOfRange(f"index {index} outside extents {p.sizespec.extents}")
    return index


def unit_at(p: Pattern, index: Sequence[int] | int) -> int:
    """Rank of the unit owning a global element.

    ``index`` is a coordinate tuple, or a row-major linear offset.
    """
    idx = _check_index(p, index)
    rank = 0
    for d, i in enumerate(idx):
        rank = rank * p.teamspec.unit_grid[d] + p._owner_coord(d, i)
    return rank


def local_index(p: Pattern, index: Sequence[int] | int) -> tuple[int, int]:
    """``(unit, local offset)`` of a global element."""
    idx = _check_index(p, index)
    unit = unit_at(p, idx)
    extents = p.local_extents(unit)
    offset = 0
    for d, i in enumerate(idx):
        offset = offset * extents[d] + p._local_coord(d, i)
    return unit, offset


def _tag_holds(p: Pattern, category: str, tag: str) -> bool:
    if category == "partitioning" and tag == "balanced":
        return all(e % b == 0 for e, b in zip(p.sizespec.extents, p.blocking))
    if category == "mapping" and tag == "balanced":
        return all(n % t == 0 for n, t in zip(p.num_blocks(), p.teamspec.unit_grid))
    if category == "mapping" and tag == "compact":
        # ranks are row-major over the team grid, so consecutive ranks share nodes
        return True
    if category == "layout" and tag == "row_major":
        return True
    return False


def violated_constraint(p: Pattern, c: DistConstraints) -> str | None:
    """First violated ``"category:tag"``, or ``None`` if all hold."""
    for category, tag in c.items():
        if tag not in TAG_REGISTRY[category]:
            raise UnknownTag(f"unknown {category} tag {tag!r}")
        if not _tag_holds(p, category, tag):
            return f"{category}:{tag}"
    return None


def check_constraints(p: Pattern, c: DistConstraints) -> bool:
    return violated_constraint(p, c) is None


def _block_size_for(extent: int, team: int, partition_balanced: bool) -> int | None:
    # Largest block size giving every unit the same number of blocks along
    # one dimension, optionally with all blocks full.
    for b in range(-(-extent // team), 0, -1):
        if partition_balanced and extent % b:
            continue
        if (-(-extent // b)) % team == 0:
            return b
    return None


def make_pattern(s: SizeSpec, t: TeamSpec, c: DistConstraints | None = None) -> Pattern:
    """Deduce a distribution for ``s`` over ``t`` that meets ``c``.

    A blocked pattern is returned whenever it satisfies the constraints.
    Otherwise every dimension gets the largest block size that deals the
    same number of blocks to each unit (and keeps blocks full if balanced
    partitioning is requested), and the result is block-cyclic.

    Raises:
        Unsatisfiable: Naming the first constraint no scheme can meet.
    """
    c = c or DistConstraints()
    if s.ndim != t.ndim:
        raise ValueError(f"sizespec has {s.ndim} dims, teamspec has {t.ndim}")
    if "node_balanced" in c.mapping:
        raise Unsatisfiable("mapping:node_balanced", "team topology preference not implemented")
    blocked = Pattern.blocked(s, t)
    violated = violated_constraint(blocked, c)
    if violated is None:
        return blocked

    blocking = []
    for extent, team in zip(s.extents, t.unit_grid):
        b = _block_size_for(extent, team, "balanced" in c.partitioning)
        if b is None:
            raise Unsatisfiable(violated, f"extent {extent} over {team} units")
        blocking.append(b)
    pattern = Pattern.block_cyclic(s, t, blocking)
    still = violated_constraint(pattern, c)
    if still is not None:
        raise Unsatisfiable(still)
    return pattern
