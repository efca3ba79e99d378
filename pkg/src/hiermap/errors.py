"""Exception types shared across the package."""

from __future__ import annotations


class HiermapError(Exception):
    """Base class for all errors raised by :mod:`hiermap`."""


class ParseError(HiermapError, ValueError):
    """Malformed placement string or topology file line.

    Attributes:
        offset: Byte offset of the first mismatching character, if known.
        line: 1-based line number in the source file, if known.
    """

    def __init__(self, message: str, offset: int | None = None, line: int | None = None):
        self.offset = offset
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class DuplicateNode(HiermapError, ValueError):
    def __init__(self, node_id: str, line: int | None = None):
        self.node_id = node_id
        self.line = line
        suffix = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate node id {node_id!r}{suffix}")


class RaggedAllocation(HiermapError, ValueError):
    """Allocated nodes do not all provide the same number of cores."""


class DimensionMismatch(HiermapError, ValueError):
    pass


class DivisibilityError(HiermapError, ValueError):
    """The unit grid cannot be tiled by the per-node brick."""


class MappingOverflow(HiermapError, RuntimeError):
    """A computed unit ID fell outside ``[0, total_units)``."""


class OutOfRange(HiermapError, IndexError):
    pass


class UnknownTag(HiermapError, ValueError):
    pass


class Unsatisfiable(HiermapError, ValueError):
    """No registered distribution scheme meets the requested constraints.

    Attributes:
        tag: The first violated constraint tag, as ``"<category>:<tag>"``.
    """

    def __init__(self, tag: str, detail: str = ""):
        self.tag = tag
        msg = f"constraint {tag} cannot be satisfied"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class InvalidChunkSize(HiermapError, ValueError):
    pass


class InconsistentMapping(HiermapError, ValueError):
    """A unit in the stencil grid has no node assignment."""
