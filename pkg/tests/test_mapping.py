from __future__ import annotations

import io
import random
import warnings

import pytest

from conftest import blade_nodes, random_topology
from oracles import is_brick, node_boxes

from hiermap.errors import DivisibilityError, OutOfRange
from hiermap.mapping import (
    MAPPING_CSV_HEADER,
    apply_mapping,
    compute_mapping,
    derive_level_grids,
    identity_mapping,
    unit_to_grid_coord,
    write_mapping_csv,
)
from hiermap.synth import generate_allocation
from hiermap.topology import build_topology


def test_single_node_is_identity():
    topo = build_topology(generate_allocation(1))
    m = compute_mapping(topo)
    assert m.nt.dims == (4, 3, 2) == m.n0.dims
    g = m.grids
    assert (g.n1.dims, g.n2.dims, g.n3.dims, g.n4.dims) == ((1, 1), (1, 1, 1), (1, 1, 1), (1, 1, 1))
    assert m.perm == tuple(range(24))
    assert not m.fallback


def test_two_nodes_one_blade():
    m = compute_mapping(build_topology(blade_nodes(2)))
    assert m.nt.dims == (2, 2, 2)
    assert m.n0.dims == (2, 2, 1)
    assert m.grids.n1.dims == (1, 2)
    assert m.perm == (0, 2, 4, 6, 1, 3, 5, 7)
    assert apply_mapping(m, 4) == 1


def test_four_nodes_one_blade_grids():
    g = derive_level_grids(build_topology(blade_nodes(4)), 16)
    assert g.nt.dims == (4, 2, 2)
    assert g.n0.dims == (2, 2, 1)
    assert g.composed() == (4, 2, 2)
    # the whole blade sits inside one level-2 block
    assert (g.n3.dims, g.n4.dims) == ((1, 1, 1), (1, 1, 1))


@pytest.mark.xfail(strict=True, reason="N1=(2,2) does not compose with N0=(2,2,1) into NT=(4,2,2)")
def test_four_nodes_one_blade_n1_literal():
    g = derive_level_grids(build_topology(blade_nodes(4)), 16)
    assert g.n1.dims == (2, 2)


def test_full_group_grids():
    topo = build_topology(generate_allocation(384))
    g = derive_level_grids(topo, topo.capacity)
    assert g.n0.dims == (4, 3, 2)
    assert g.nt.dims == (24, 24, 16)
    assert g.composed() == g.nt.dims


def test_single_unit():
    m = compute_mapping(build_topology(generate_allocation(3)), total_units=1)
    assert m.perm == (0,)


def test_partial_node_falls_back_with_warning():
    topo = build_topology(blade_nodes(2))
    with pytest.warns(UserWarning, match="launcher order"):
        m = compute_mapping(topo, total_units=6)
    assert m.fallback
    assert m.perm == tuple(range(6))
    with pytest.raises(DivisibilityError):
        compute_mapping(topo, total_units=6, strict=True)


def test_too_many_units():
    with pytest.raises(OutOfRange):
        compute_mapping(build_topology(blade_nodes(2)), total_units=9)


def test_apply_mapping_bounds():
    m = identity_mapping(build_topology(generate_allocation(1)), 24)
    assert apply_mapping(m, 5) == 5
    with pytest.raises(OutOfRange):
        apply_mapping(m, 24)
    with pytest.raises(OutOfRange):
        apply_mapping(m, -1)


@pytest.mark.parametrize("new_id, expected", [(0, (0, 0, 0)), (23, (3, 2, 1)), (7, (1, 0, 1))])
def test_unit_to_grid_coord(new_id, expected):
    m = compute_mapping(build_topology(generate_allocation(1)))
    assert unit_to_grid_coord(m, new_id) == expected


def test_unit_to_grid_coord_bounds():
    m = compute_mapping(build_topology(generate_allocation(1)))
    with pytest.raises(OutOfRange):
        unit_to_grid_coord(m, 24)


def test_bijection_and_bricks_random():
    rng = random.Random(99)
    for _ in range(200):
        topo = random_topology(rng)
        nodes = rng.randint(1, topo.num_nodes)
        total = nodes * topo.units_per_node
        m = compute_mapping(topo, total, strict=True)
        assert sorted(m.perm) == list(range(total))
        if nodes > 1:
            for cells in node_boxes(m).values():
                assert is_brick(cells, m.n0.dims)


def test_fallback_is_bijection_too():
    rng = random.Random(5)
    for _ in range(50):
        topo = random_topology(rng)
        if topo.units_per_node == 1 or topo.num_nodes == 1:
            continue
        total = rng.randrange(topo.units_per_node + 1, topo.capacity + 1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = compute_mapping(topo, total)
        assert sorted(m.perm) == list(range(total))


def test_deterministic():
    topo = build_topology(generate_allocation(96, 0.5, seed=3))
    assert compute_mapping(topo).perm == compute_mapping(topo).perm


def test_original_order_override():
    topo = build_topology(blade_nodes(2))
    # launcher placed units round-robin instead of node-major
    order = ["n0", "n1"] * 4
    m = compute_mapping(topo, original_order=order)
    default = compute_mapping(topo)
    assert [m.perm[i] for i in range(0, 8, 2)] == list(default.perm[:4])
    assert [m.perm[i] for i in range(1, 8, 2)] == list(default.perm[4:])
    assert list(m.placement()) == list(default.placement())


def test_mapping_csv():
    m = compute_mapping(build_topology(blade_nodes(2)))
    buf = io.StringIO()
    write_mapping_csv(m, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(MAPPING_CSV_HEADER)
    assert len(lines) == 9
    assert lines[2] == "1,2,n0,0,1,0"
