"""Command-line entry point.

Subcommands::

    hiermap map            --topology FILE [--units N|auto] [--out CSV]
    hiermap bench-stencil  --topology FILE [--latency-model CFG] [--msg-sizes LIST] [--out CSV]
    hiermap pattern        --size 1024,512 --team 16,8 [--balanced] [--constraint CAT:TAG ...]
    hiermap copy-plan      --size 100 --team 4 --range 20 60 --viewer 1 [--chunk-bytes N]
    hiermap gen-topology   --nodes 384 [--sparse 0.5] [--seed 0] [--out FILE]

Exit codes: 0 success, 1 bad input (parse errors, out-of-range arguments,
invalid chunk size), 2 hierarchical mapping fell back to launcher order,
3 unsatisfiable pattern constraints.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import sys
import warnings
from pathlib import Path
from typing import Iterator, Sequence, TextIO

from .errors import DivisibilityError, HiermapError, Unsatisfiable
from .mapping import compute_mapping, write_mapping_csv
from .netsim import (
    LatencyModel,
    StencilSpec,
    default_latency_model,
    default_message_sizes,
    improvement_factor,
    load_latency_model,
    ratio_summary,
    simulate_copy_plan,
)
from .pattern import DistConstraints, SizeSpec, TeamSpec, make_pattern
from .ranges import build_copy_plan, local_range
from .synth import generate_allocation
from .topology import HierTopology, build_topology, dump_topology_file, load_topology_file

__all__ = ["main", "build_parser", "BENCH_CSV_HEADER"]

BENCH_CSV_HEADER = (
    "message_bytes",
    "cost_default",
    "cost_hier",
    "improvement_factor",
    "sum_default",
    "sum_hier",
)
REFERENCE_BAND = (1.4, 2.2)

EXIT_OK, EXIT_INPUT, EXIT_FALLBACK, EXIT_UNSATISFIABLE = 0, 1, 2, 3


def _int_list(text: str) -> list[int]:
    try:
        values = [int(v) for v in text.replace("x", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _msg_sizes(text: str) -> list[int]:
    values = _int_list(text)
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("message sizes must be >= 1")
    return values


def _units(text: str) -> int | None:
    if text == "auto":
        return None
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--units takes a count or 'auto', got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("--units must be positive")
    return n


def _existing_path(text: str) -> Path:
    path = Path(text)
    if not path.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {text}")
    return path


@contextlib.contextmanager
def _output(path: Path | None) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _read_topology(path: Path) -> HierTopology:
    with open(path) as fh:
        return build_topology(load_topology_file(fh).values())


def _read_model(path: Path | None) -> LatencyModel:
    if path is None:
        return default_latency_model()
    with open(path) as fh:
        return load_latency_model(fh)


def _report(args: argparse.Namespace) -> TextIO:
    # keep stdout clean when it carries the CSV
    return sys.stderr if args.out is None else sys.stdout


def cmd_map(args: argparse.Namespace) -> int:
    topo = _read_topology(args.topology)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mapping = compute_mapping(topo, args.units)
    with _output(args.out) as out:
        write_mapping_csv(mapping, out)
    report = _report(args)
    print(f"units: {mapping.total_units} on {topo.num_nodes} nodes", file=report)
    print(f"grids: {mapping.grids.summary()}", file=report)
    if mapping.fallback:
        for w in caught:
            print(f"warning: {w.message}", file=report)
        print("fallback: identity mapping", file=report)
        return EXIT_FALLBACK
    print("fallback: no", file=report)
    return EXIT_OK


def cmd_bench_stencil(args: argparse.Namespace) -> int:
    topo = _read_topology(args.topology)
    model = _read_model(args.latency_model)
    sizes = args.msg_sizes or default_message_sizes()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        mapping = compute_mapping(topo, args.units)
    spec = StencilSpec(mapping.nt, message_bytes=sizes[0], iterations=args.iterations)
    rows = improvement_factor(spec, topo, model, sizes, hier=mapping)
    with _output(args.out) as out:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(BENCH_CSV_HEADER)
        for r in rows:
            writer.writerow(
                [r.message_bytes, repr(r.cost_default), repr(r.cost_hier), repr(r.factor),
                 repr(r.sum_default), repr(r.sum_hier)]
            )
    report = _report(args)
    lo, mean, hi = ratio_summary(rows)
    print(f"grids: {mapping.grids.summary()}", file=report)
    print(
        f"improvement factor over {len(rows)} sizes: min {lo:.3f} mean {mean:.3f} max {hi:.3f} "
        f"(reference band {REFERENCE_BAND[0]}-{REFERENCE_BAND[1]})",
        file=report,
    )
    if mapping.fallback:
        for w in caught:
            print(f"warning: {w.message}", file=report)
        return EXIT_FALLBACK
    return EXIT_OK


def _constraints(args: argparse.Namespace) -> DistConstraints:
    specs = list(args.constraint or [])
    if args.balanced:
        specs += ["partitioning:balanced", "mapping:balanced"]
    return DistConstraints.parse(specs)


def _make_pattern(args: argparse.Namespace):
    s, t = SizeSpec(args.size), TeamSpec(args.team)
    if s.ndim != t.ndim:
        raise ValueError(f"--size has {s.ndim} dims but --team has {t.ndim}")
    return make_pattern(s, t, _constraints(args))


def cmd_pattern(args: argparse.Namespace) -> int:
    p = _make_pattern(args)
    loads = [p.local_size(u) for u in range(p.team_size)]
    print(p.describe())
    print(f"blocks: {'x'.join(map(str, p.num_blocks()))} over team {'x'.join(map(str, p.teamspec.unit_grid))}")
    if min(loads) == max(loads):
        print(f"per-unit load: {loads[0]} elements (all {p.team_size} units)")
    else:
        print(f"per-unit load: min {min(loads)} max {max(loads)} elements")
    return EXIT_OK


def cmd_copy_plan(args: argparse.Namespace) -> int:
    p = _make_pattern(args)
    begin, end = args.range
    upn = args.units_per_node
    segments = local_range(p, begin, end, args.viewer, colocation=[u // upn for u in range(p.team_size)])
    plan = build_copy_plan(segments, args.element_size, args.chunk_bytes, viewer=args.viewer)
    n_nodes = -(-p.team_size // upn)
    topo = build_topology(generate_allocation(n_nodes, sockets=1, cores_per_socket=upn))
    placement = [topo.nodes[u // upn].node_id for u in range(p.team_size)]
    sim = simulate_copy_plan(plan, placement, topo, _read_model(args.latency_model), args.viewer)

    print(f"pattern: {p.describe()}")
    print(f"{len(segments)} segments")
    for seg in segments:
        print(f"  [{seg.global_begin}, {seg.global_end}) unit {seg.owner} {seg.locality.value}")
    print(f"{len(plan.ops)} ops (chunk {plan.chunk_size} bytes)")
    for op in plan.ops:
        print(
            f"  {op.kind.value} unit {op.source_unit} [{op.global_begin}, {op.global_end}) chunk {op.chunk_index}"
        )
    print(f"simulated time: {sim.completion:.6g} us")
    return EXIT_OK


def cmd_gen_topology(args: argparse.Namespace) -> int:
    records = generate_allocation(
        args.nodes, args.sparse, args.seed, args.sockets, args.cores_per_socket
    )
    header = f"synthetic allocation: {args.nodes} nodes, sparse={args.sparse}, seed={args.seed}"
    with _output(args.out) as out:
        dump_topology_file(records, out, header)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiermap", description="Hierarchical unit mapping toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def topology_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--topology", type=_existing_path, required=True, help="node placement file")
        p.add_argument("--units", type=_units, default=None, help="unit count or 'auto' (all cores)")
        p.add_argument("--out", type=Path, help="CSV output path (default stdout)")

    p = sub.add_parser("map", help="compute the hierarchical unit mapping")
    topology_args(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("bench-stencil", help="simulate the 6-point stencil under both mappings")
    topology_args(p)
    p.add_argument("--latency-model", type=_existing_path, help="latency config (default: shipped model)")
    p.add_argument("--msg-sizes", type=_msg_sizes, help="comma separated byte counts (default 1 B..2 MiB)")
    p.add_argument("--iterations", type=int, default=10000)
    p.set_defaults(func=cmd_bench_stencil)

    def pattern_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--size", type=_int_list, required=True, help="global extents, e.g. 1024,512")
        p.add_argument("--team", type=_int_list, required=True, help="unit grid, e.g. 16,8")
        p.add_argument("--balanced", action="store_true", help="balanced partitioning and mapping")
        p.add_argument("--constraint", action="append", metavar="CAT:TAG", help="extra constraint tag")

    p = sub.add_parser("pattern", help="deduce a distribution pattern")
    pattern_args(p)
    p.set_defaults(func=cmd_pattern)

    p = sub.add_parser("copy-plan", help="plan and simulate copying a global range")
    pattern_args(p)
    p.add_argument("--range", type=int, nargs=2, metavar=("BEGIN", "END"), required=True)
    p.add_argument("--viewer", type=int, default=0)
    p.add_argument("--chunk-bytes", type=int, default=None)
    p.add_argument("--element-size", type=int, default=8)
    p.add_argument("--units-per-node", type=int, default=1)
    p.add_argument("--latency-model", type=_existing_path)
    p.set_defaults(func=cmd_copy_plan)

    p = sub.add_parser("gen-topology", help="write a synthetic allocation")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--sparse", type=float, default=1.0, help="fraction of spanned nodes taken (1 = contiguous)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sockets", type=int, default=2)
    p.add_argument("--cores-per-socket", type=int, default=12)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_gen_topology)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Unsatisfiable as exc:
        print(f"error: unsatisfiable constraint {exc.tag}: {exc}", file=sys.stderr)
        return EXIT_UNSATISFIABLE
    except DivisibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FALLBACK
    except (HiermapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
