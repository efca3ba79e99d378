from __future__ import annotations

import random

import pytest

from hiermap.synth import generate_allocation
from hiermap.topology import NodePlacement, NodeRecord, build_topology


def blade_nodes(n, cores=4, blade=0):
    """``n`` nodes on one blade (n <= 4), single socket of ``cores`` cores."""
    return [
        NodeRecord(f"n{i}", NodePlacement(0, 0, 0, blade, i), 1, cores) for i in range(n)
    ]


def random_allocation(rng: random.Random, max_nodes=64, max_cores=24):
    """A seeded random allocation: node count, core layout and sparsity vary."""
    n_nodes = rng.randint(1, max_nodes)
    cores = rng.randint(1, max_cores)
    sockets = rng.choice([s for s in (1, 2, 3, 4) if cores % s == 0])
    sparse = rng.choice([1.0, 0.8, 0.5, 0.2])
    return generate_allocation(
        n_nodes, sparse, seed=rng.randrange(1 << 30), sockets=sockets,
        cores_per_socket=cores // sockets,
    )


def random_topology(rng: random.Random, max_nodes=64, max_cores=24):
    return build_topology(random_allocation(rng, max_nodes, max_cores))


@pytest.fixture
def rng():
    return random.Random(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
