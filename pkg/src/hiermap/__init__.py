"""Topology-aware unit mapping for hierarchical networks.

Parses node placements, derives a brick-hierarchical renumbering of units
for stencil codes, deduces data distribution patterns, plans locality-aware
copies and estimates communication cost with a per-level latency model.
"""

from __future__ import annotations

from .errors import (
    DimensionMismatch,
    DivisibilityError,
    DuplicateNode,
    HiermapError,
    InconsistentMapping,
    InvalidChunkSize,
    MappingOverflow,
    OutOfRange,
    ParseError,
    RaggedAllocation,
    UnknownTag,
    Unsatisfiable,
)
from .grid import CartesianGrid, balanced_factorization, check_divisibility
from .mapping import (
    LevelGrids,
    UnitMapping,
    apply_mapping,
    compute_mapping,
    derive_level_grids,
    identity_mapping,
    unit_to_grid_coord,
    write_mapping_csv,
)
from .netsim import (
    LatencyModel,
    StencilSpec,
    default_latency_model,
    improvement_factor,
    load_latency_model,
    message_cost,
    simulate_copy_plan,
    stencil_cost,
)
from .pattern import (
    DistConstraints,
    Pattern,
    SizeSpec,
    TeamSpec,
    check_constraints,
    local_index,
    make_pattern,
    unit_at,
)
from .ranges import CopyPlan, build_copy_plan, copy, copy_async, local_range
from .synth import generate_allocation
from .topology import (
    HierTopology,
    NodePlacement,
    NodeRecord,
    build_topology,
    level_of_common_ancestor,
    load_topology_file,
    parse_placement,
    sort_nodes,
)

__version__ = "0.1.0"
