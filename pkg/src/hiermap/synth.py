"""Synthetic XC40-like allocations for experiments without a real machine dump."""

from __future__ import annotations

import random
from dataclasses import dataclass

from .topology import NodePlacement, NodeRecord

__all__ = ["MachineShape", "XC40", "generate_allocation"]


@dataclass(frozen=True)
class MachineShape:
    nodes_per_blade: int = 4
    blades_per_chassis: int = 16
    chassis_per_cabinet: int = 3

    @property
    def nodes_per_cabinet(self) -> int:
        return self.nodes_per_blade * self.blades_per_chassis * self.chassis_per_cabinet

    def placement(self, index: int) -> NodePlacement:
        """Placement of the ``index``-th node of a single cabinet row."""
        npb, bpc = self.nodes_per_blade, self.blades_per_chassis
        return NodePlacement(
            column=index // self.nodes_per_cabinet,
            row=0,
            chassis=(index // (npb * bpc)) % self.chassis_per_cabinet,
            blade=(index // npb) % bpc,
            node=index % npb,
        )


XC40 = MachineShape()


def generate_allocation(
    n_nodes: int,
    sparse: float = 1.0,
    seed: int = 0,
    sockets: int = 2,
    cores_per_socket: int = 12,
    max_run: int = 8,
    shape: MachineShape = XC40,
) -> list[NodeRecord]:
    """Allocate ``n_nodes`` nodes from a machine, in contiguous runs.

    Runs of 1..``max_run`` consecutive nodes are separated by random gaps
    sized so that roughly a ``sparse`` fraction of the spanned nodes is
    taken; ``sparse=1`` yields a contiguous allocation.
    """
    if n_nodes < 0:
        raise ValueError("node count must be non-negative")
    if not 0 < sparse <= 1:
        raise ValueError(f"sparse fraction must be in (0, 1], got {sparse}")
    rng = random.Random(seed)
    indices: list[int] = []
    pos = 0
    while len(indices) < n_nodes:
        run = rng.randint(1, max_run)
        take = min(run, n_nodes - len(indices))
        indices.extend(range(pos, pos + take))
        pos += run
        if sparse < 1:
            pos += rng.randint(0, round(2 * run * (1 / sparse - 1)))
    return [
        NodeRecord(f"nid{i:05d}", shape.placement(i), sockets, cores_per_socket)
        for i in indices
    ]
