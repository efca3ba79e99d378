"""Locality segmentation of global ranges and copy planning.

:func:`local_range` cuts a global (row-major linearised) index range into
maximal runs owned by one unit and tags each run by where it lives
relative to the viewing unit. :func:`build_copy_plan` turns those runs
into copy operations: node-local runs become a single direct memory copy,
remote runs are split into chunks and interleaved round-robin across the
source units.
"""

from __future__ import annotations

import os
import threading
from collections import OrderedDict
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Hashable, Mapping, MutableSequence, Sequence

from .errors import InvalidChunkSize, OutOfRange
from .pattern import Pattern, unit_at

__all__ = [
    "Locality",
    "OpKind",
    "RangeSegment",
    "CopyOp",
    "CopyPlan",
    "CopyHandle",
    "local_range",
    "build_copy_plan",
    "copy_async",
    "copy",
    "default_chunk_size",
    "CHUNK_ENV_VAR",
    "DEFAULT_CHUNK_BYTES",
]

CHUNK_ENV_VAR = "HIERMAP_CHUNK_BYTES"
DEFAULT_CHUNK_BYTES = 1 << 20


class Locality(str, Enum):
    LOCAL = "local"
    SAME_NODE = "same_node"
    REMOTE = "remote"


class OpKind(str, Enum):
    DIRECT_MEMORY = "direct_memory"
    REMOTE_GET = "remote_get"


@dataclass(frozen=True)
class RangeSegment:
    owner: int
    global_begin: int
    global_end: int
    locality: Locality

    def __post_init__(self):
        if self.global_begin >= self.global_end:
            raise ValueError(f"empty segment [{self.global_begin}, {self.global_end})")

    def __len__(self) -> int:
        return self.global_end - self.global_begin


@dataclass(frozen=True)
class CopyOp:
    kind: OpKind
    source_unit: int
    global_begin: int
    global_end: int
    chunk_index: int

    @property
    def count(self) -> int:
        return self.global_end - self.global_begin


@dataclass(frozen=True)
class CopyPlan:
    ops: tuple[CopyOp, ...]
    chunk_size: int
    element_size: int = 8
    viewer: int | None = None

    @property
    def begin(self) -> int:
        return min((op.global_begin for op in self.ops), default=0)

    @property
    def total_elements(self) -> int:
        return sum(op.count for op in self.ops)

    @property
    def total_bytes(self) -> int:
        return self.total_elements * self.element_size

    def op_bytes(self, op: CopyOp) -> int:
        return op.count * self.element_size

    def remote_ops(self) -> list[CopyOp]:
        return [op for op in self.ops if op.kind is OpKind.REMOTE_GET]


def default_chunk_size(configured: int | None = None) -> int:
    """Chunk size in bytes: ``$HIERMAP_CHUNK_BYTES`` if set, else ``configured``, else 1 MiB."""
    env = os.environ.get(CHUNK_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise InvalidChunkSize(f"{CHUNK_ENV_VAR}={env!r} is not an integer") from None
        if value < 1:
            raise InvalidChunkSize(f"{CHUNK_ENV_VAR} must be positive, got {value}")
        return value
    return configured if configured is not None else DEFAULT_CHUNK_BYTES


def _run_end(p: Pattern, linear: int) -> int:
    # End of the run starting at ``linear`` inside one block of the last dimension.
    extent = p.sizespec.extents[-1]
    block = p.blocking[-1]
    i = linear % extent
    return linear + min((i // block + 1) * block, extent) - i


def local_range(
    p: Pattern,
    begin: int,
    end: int,
    viewer: int,
    colocation: Mapping[int, Hashable] | Sequence[Hashable] | None = None,
) -> list[RangeSegment]:
    """Split ``[begin, end)`` into maximal single-owner segments.

    Args:
        p: Distribution of the global array (indices linearised row-major).
        begin, end: Half-open global range.
        viewer: Unit from whose point of view locality is classified.
        colocation: Node of every unit. Units sharing the viewer's node are
            ``same_node``. Without it every unit is its own node.
    """
    if not 0 <= begin <= end <= p.size:
        raise OutOfRange(f"range [{begin}, {end}) outside [0, {p.size})")
    if not 0 <= viewer < p.team_size:
        raise OutOfRange(f"viewer {viewer} outside team of {p.team_size}")

    def classify(owner: int) -> Locality:
        if owner == viewer:
            return Locality.LOCAL
        if colocation is not None and colocation[owner] == colocation[viewer]:
            return Locality.SAME_NODE
        return Locality.REMOTE

    segments: list[RangeSegment] = []
    cur_owner, cur_begin = None, begin
    pos = begin
    while pos < end:
        owner = unit_at(p, pos)
        nxt = min(_run_end(p, pos), end)
        if owner != cur_owner:
            if cur_owner is not None:
                segments.append(RangeSegment(cur_owner, cur_begin, pos, classify(cur_owner)))
            cur_owner, cur_begin = owner, pos
        pos = nxt
    if cur_owner is not None:
        segments.append(RangeSegment(cur_owner, cur_begin, end, classify(cur_owner)))
    return segments


def build_copy_plan(
    segments: Sequence[RangeSegment],
    element_size: int = 8,
    chunk_size: int | None = None,
    viewer: int | None = None,
) -> CopyPlan:
    """Plan the transfer of ``segments`` into a local buffer.

    Direct memory copies come first, in segment order. Remote segments are
    cut into chunks of at most ``chunk_size`` bytes; chunks of different
    source units are interleaved round-robin (first chunk of every source,
    then every second chunk, ...), sources ordered by first appearance.

    Raises:
        InvalidChunkSize: If a chunk cannot hold a single element.
    """
    if element_size < 1:
        raise ValueError(f"element size must be positive, got {element_size}")
    chunk_size = default_chunk_size() if chunk_size is None else chunk_size
    if chunk_size < element_size:
        raise InvalidChunkSize(f"chunk of {chunk_size} bytes is smaller than an element ({element_size})")
    per_chunk = chunk_size // element_size

    direct: list[CopyOp] = []
    chunks: OrderedDict[int, list[tuple[int, int]]] = OrderedDict()
    for seg in segments:
        if seg.locality is Locality.REMOTE:
            pieces = chunks.setdefault(seg.owner, [])
            for lo in range(seg.global_begin, seg.global_end, per_chunk):
                pieces.append((lo, min(lo + per_chunk, seg.global_end)))
        else:
            direct.append(CopyOp(OpKind.DIRECT_MEMORY, seg.owner, seg.global_begin, seg.global_end, 0))

    remote: list[CopyOp] = []
    rounds = max((len(v) for v in chunks.values()), default=0)
    for r in range(rounds):
        for unit, pieces in chunks.items():
            if r < len(pieces):
                lo, hi = pieces[r]
                remote.append(CopyOp(OpKind.REMOTE_GET, unit, lo, hi, r))
    return CopyPlan(tuple(direct + remote), chunk_size, element_size, viewer)


class CopyHandle:
    """Completion handle of an asynchronous copy.

    :meth:`wait` blocks until every operation of the plan has finished and
    returns the past-the-end destination index. Waiting is idempotent.
    """

    def __init__(self, future: Future, dest_end: int):
        self._future = future
        self._dest_end = dest_end

    def done(self) -> bool:
        return self._future.done()

    def wait(self, timeout: float | None = None) -> int:
        self._future.result(timeout)
        return self._dest_end


_executor_lock = threading.Lock()
_executor: ThreadPoolExecutor | None = None


def _shared_executor() -> ThreadPoolExecutor:
    global _executor
    with _executor_lock:
        if _executor is None:
            _executor = ThreadPoolExecutor(max_workers=4, thread_name_prefix="hiermap-copy")
        return _executor


OpRunner = Callable[[CopyOp, int], None]


def copy_async(plan: CopyPlan, dest_begin: int = 0, run_op: OpRunner | None = None) -> CopyHandle:
    """Issue ``plan`` and return immediately.

    Args:
        plan: Copy plan of a contiguous global range.
        dest_begin: Destination index of the first element of the range.
        run_op: Called as ``run_op(op, dest_offset)`` for every operation,
            on a worker thread. Operations may run in any order.
    """
    dest_end = dest_begin + plan.total_elements
    if not plan.ops:
        future: Future = Future()
        future.set_result(None)
        return CopyHandle(future, dest_end)
    base = plan.begin

    def run():
        if run_op is not None:
            for op in plan.ops:
                run_op(op, dest_begin + op.global_begin - base)

    return CopyHandle(_shared_executor().submit(run), dest_end)


def copy(
    plan: CopyPlan,
    source: Sequence,
    dest: MutableSequence,
    dest_begin: int = 0,
) -> int:
    """Copy the planned range of ``source`` (global storage) into ``dest``.

    Returns the past-the-end destination index.
    """

    def run_op(op: CopyOp, offset: int) -> None:
        dest[offset : offset + op.count] = source[op.global_begin : op.global_end]

    return copy_async(plan, dest_begin, run_op).wait()
