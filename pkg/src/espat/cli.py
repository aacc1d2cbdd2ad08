"""Command-line entry point: encode, simulate, bench, update-replay.

Exit codes: 0 = success (and exact oracle match where applicable),
1 = usage/config error, 2 = correctness mismatch.
"""

from __future__ import annotations

import argparse
import sys
from random import Random

import numpy as np

from . import bench as bench_mod
from . import ingest, protocol
from .encoding import GridConfig, OutOfBoundsError, uniform_kdtree

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MISMATCH = 2


class CliError(Exception):
    """Usage-level failure: bad flags, unreadable files, bad config."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse default exits 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _load_grid(path: str) -> GridConfig:
    try:
        return GridConfig.from_file(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"config {path}: {exc}") from exc


def _read_points(path: str, geolife: bool, client_id: str):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CliError(f"input {path}: {exc}") from exc
    if geolife:
        return ingest.parse_plt(lines, client_id)
    return ingest.parse_csv(lines)


def _read_regions(path: str, grid: GridConfig, scheme: str) -> list[protocol.Region]:
    """Region file: one query per line, either `box x0 x1 y0 y1 z0 z1`
    (half-open cell ranges) or `cells DEPTH` (all cells at an octree depth)."""
    regions: list[protocol.Region] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CliError(f"regions {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        try:
            if fields[0] == "box" and len(fields) == 7:
                x0, x1, y0, y1, z0, z1 = (int(v) for v in fields[1:])
                query = protocol.RegionQuery(box=((x0, x1), (y0, y1), (z0, z1)))
                regions.extend(protocol.decompose_region(query, grid, scheme))
            elif fields[0] == "cells" and len(fields) == 2:
                depth = int(fields[1])
                if not 0 < depth <= grid.depth:
                    raise ValueError(f"cells depth must be in 1..{grid.depth}")
                regions.extend(_cells_at_depth(depth, scheme))
            else:
                raise ValueError("expected `box x0 x1 y0 y1 z0 z1` or `cells DEPTH`")
        except (ValueError, protocol.UnalignedBoxError) as exc:
            raise CliError(f"regions {path} line {lineno}: {exc}") from exc
    if not regions:
        raise CliError(f"regions {path}: no regions")
    return regions


def _cells_at_depth(depth: int, scheme: str) -> list[protocol.Region]:
    if scheme == "b":
        out = []
        for v in range(8**depth):
            path = []
            for level in range(depth - 1, -1, -1):
                path.append((v >> (3 * level)) & 7)
            out.append(tuple(path))
        return out
    kd = 3 * depth
    return [tuple((v >> (kd - 1 - i)) & 1 for i in range(kd)) for v in range(1 << kd)]


def _schemes(arg: str) -> list[str]:
    return ["b", "plus"] if arg == "both" else [arg]


# ---------------------------------------------------------------------------
# encode
# ---------------------------------------------------------------------------


def cmd_encode(args: argparse.Namespace) -> int:
    grid = _load_grid(args.config)
    points, parse_errors = _read_points(args.input, args.geolife, args.client_id)
    tree = uniform_kdtree(grid)
    warnings = 0
    for lineno, reason in parse_errors:
        print(f"warning: line {lineno}: {reason}", file=sys.stderr)
        warnings += 1
    for p in points:
        try:
            path = protocol.encode_point(p, "b", grid, None)
            prefix = protocol.encode_point(p, "plus", grid, tree)
        except OutOfBoundsError as exc:
            print(f"warning: {p.client_id}: {exc}", file=sys.stderr)
            warnings += 1
            continue
        path_s = "".join(str(s) for s in path)
        prefix_s = "".join(str(b) for b in prefix)
        print(f"{p.client_id},{path_s},{prefix_s}")
    if warnings:
        print(f"{warnings} warning(s)", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _format_rows(header: tuple[str, ...], rows: list[tuple], fmt: str) -> list[str]:
    if fmt == "csv":
        return [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    cols = [header] + [tuple(str(v) for v in row) for row in rows]
    widths = [max(len(r[i]) for r in cols) for i in range(len(header))]
    return [
        " ".join(f"{r[i]:<{widths[i]}}" for i in range(len(header))).rstrip() for r in cols
    ]


def _run_one_simulation(
    scheme: str,
    grid: GridConfig,
    points,
    regions: list[protocol.Region] | None,
    histogram: bool,
    seed: int,
    corrupt: bool,
    fmt: str,
) -> tuple[bool, list[str], protocol.CommReport]:
    rng = Random(seed)
    sim = protocol.Simulation(
        scheme, grid, regions=regions, histogram=histogram, rng=rng
    )
    inside, outside = ingest.filter_in_bounds(points, grid)
    for i, p in enumerate(inside):
        sub = protocol.build_point_submission(p, scheme, grid, sim.tree, rng=rng)
        if corrupt and i == 0:
            share = bytearray(sub.share1)
            share[len(share) // 2] ^= 0x5A
            sub = protocol.ClientSubmission(
                sub.client_id, sub.scheme, sub.kind, sub.share0, bytes(share), sub.public
            )
        sim.deliver(sub)
        sim.positions[p.client_id] = p

    lines = []
    ok = True
    try:
        result = sim.combine()
    except protocol.NegativeCountError as exc:
        return False, [f"combine failed: {exc}"], sim.comm_report()

    if histogram:
        oracle_hist, _ = ingest.oracle_histogram(inside, scheme=scheme, grid=grid, tree=sim.tree)
        match = bool((result.histogram == oracle_hist).all())
        ok = match
        nonzero = np.nonzero(oracle_hist)[0]
        rows = [
            (int(idx), int(result.histogram[idx]), int(oracle_hist[idx]),
             int(result.histogram[idx]) == int(oracle_hist[idx]))
            for idx in nonzero[:20]
        ]
        lines.extend(_format_rows(("cell_index", "count", "oracle", "match"), rows, fmt))
        if len(nonzero) > 20:
            lines.append(f"# ... {len(nonzero) - 20} more nonzero cells")
        lines.append(f"# histogram exact match: {match}")
    else:
        oracle = ingest.oracle_count(inside, regions, scheme=scheme, grid=grid, tree=sim.tree)
        rows = []
        for region in regions:
            got = result.counts[tuple(region)]
            want = oracle.counts[tuple(region)]
            if got != want:
                ok = False
            rows.append(("".join(str(v) for v in region), got, want, got == want))
        lines.extend(_format_rows(("region", "count", "oracle", "match"), rows, fmt))
        lines.append(f"# region counts exact match: {ok}")
    if outside:
        lines.append(f"# skipped {len(outside)} out-of-bounds point(s)")
    return ok, lines, sim.comm_report()


def cmd_simulate(args: argparse.Namespace) -> int:
    grid = _load_grid(args.config)
    points, parse_errors = _read_points(args.input, args.geolife, args.client_id)
    for lineno, reason in parse_errors:
        print(f"warning: line {lineno}: {reason}", file=sys.stderr)
    all_ok = True
    accounting_rows = ["scheme,sender,receiver,bytes"]
    for scheme in _schemes(args.scheme):
        if args.histogram:
            regions = None
        elif args.regions:
            regions = _read_regions(args.regions, grid, scheme)
        else:
            regions = protocol.decompose_region(
                protocol.RegionQuery.whole_grid(grid), grid, scheme
            )
        ok, lines, report = _run_one_simulation(
            scheme, grid, points, regions, args.histogram, args.seed, args.corrupt,
            args.format,
        )
        all_ok = all_ok and ok
        print(f"== scheme {scheme}")
        for line in lines:
            print(line)
        for sender, receiver, nbytes in report.rows():
            accounting_rows.append(f"{scheme},{sender},{receiver},{nbytes}")
    accounting = "\n".join(accounting_rows) + "\n"
    if args.accounting:
        with open(args.accounting, "w", encoding="utf-8") as fh:
            fh.write(accounting)
    else:
        print("== accounting")
        print(accounting, end="")
    return EXIT_OK if all_ok else EXIT_MISMATCH


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------


def cmd_bench(args: argparse.Namespace) -> int:
    bits_sweep = tuple(args.depth) if args.depth else bench_mod.STRING_LENGTH_SWEEP
    record_sweep = tuple(args.records) if args.records else bench_mod.RECORD_SWEEP
    try:
        records = bench_mod.run_bench(
            seed=args.seed,
            repeats=args.repeats,
            bits_sweep=bits_sweep,
            record_sweep=record_sweep,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if args.format == "csv":
        print(bench_mod.records_to_csv(records), end="")
    else:
        print(bench_mod.records_to_table(records), end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# update-replay
# ---------------------------------------------------------------------------


def cmd_update_replay(args: argparse.Namespace) -> int:
    grid = _load_grid(args.config)
    points, parse_errors = _read_points(args.input, args.geolife, args.client_id)
    moves, move_errors = _read_points(args.moves, False, args.client_id)
    for lineno, reason in parse_errors + move_errors:
        print(f"warning: line {lineno}: {reason}", file=sys.stderr)
    all_ok = True
    for scheme in _schemes(args.scheme):
        rng = Random(args.seed)
        sim = protocol.Simulation(scheme, grid, histogram=True, rng=rng)
        inside, outside = ingest.filter_in_bounds(points, grid)
        current = {}
        for p in inside:
            sim.submit_point(p)
            current[p.client_id] = p
        update_bytes = 0
        applied = 0
        for mv in moves:
            if mv.client_id not in current:
                raise CliError(f"move references unknown client {mv.client_id!r}")
            if not grid.contains(mv):
                print(f"warning: move for {mv.client_id} out of bounds, skipped", file=sys.stderr)
                continue
            subs = sim.apply_update(mv.client_id, mv)
            update_bytes += sum(s.bytes_for(0) + s.bytes_for(1) for s in subs)
            current[mv.client_id] = mv
            applied += 1
        result = sim.combine()
        oracle_hist, _ = ingest.oracle_histogram(
            list(current.values()), scheme=scheme, grid=grid, tree=sim.tree
        )
        match = bool((result.histogram == oracle_hist).all())
        all_ok = all_ok and match
        print(f"== scheme {scheme}")
        print(f"points={len(inside)} skipped={len(outside)} moves_applied={applied}")
        print(f"update_bytes={update_bytes}")
        print(f"final_total={result.total()}")
        print(f"# histogram exact match: {match}")
    return EXIT_OK if all_ok else EXIT_MISMATCH


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="espat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="key=value grid config file")
    common.add_argument("--seed", type=int, default=0, help="deterministic randomness seed")
    common.add_argument("--geolife", action="store_true", help="input is Geolife PLT format")
    common.add_argument("--client-id", default="plt", help="client id for PLT input")
    common.add_argument(
        "--format", choices=("csv", "table"), default="table", help="output format"
    )

    p = sub.add_parser("encode", parents=[common], help="print per-point octree path and KD prefix")
    p.add_argument("--input", required=True, help="points CSV (client_id,timestamp,lat,lon,alt)")
    p.set_defaults(fn=cmd_encode)

    p = sub.add_parser("simulate", parents=[common], help="end-to-end two-server simulation")
    p.add_argument("--input", required=True)
    p.add_argument("--regions", help="region query file (default: whole grid)")
    p.add_argument("--histogram", action="store_true", help="count every grid cell")
    p.add_argument("--scheme", choices=("b", "plus", "both"), default="both")
    p.add_argument("--accounting", help="write accounting CSV here instead of stdout")
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)  # test hook
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser(
        "bench",
        help="timing/size sweeps (timings are not deterministic)",
        epilog=f"CSV column order: {bench_mod.CSV_HEADER}",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=bench_mod.MIN_REPEATS)
    p.add_argument("--depth", type=int, nargs="*", help="string-length sweep in bits")
    p.add_argument("--records", type=int, nargs="*", help="record-count sweep")
    p.add_argument("--format", choices=("csv", "table"), default="table")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("update-replay", parents=[common], help="replay moves, report savings")
    p.add_argument("--input", required=True, help="initial points CSV")
    p.add_argument("--moves", required=True, help="moves CSV (new position per row)")
    p.add_argument("--scheme", choices=("b", "plus", "both"), default="both")
    p.set_defaults(fn=cmd_update_replay)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
