"""Command-line interface.

    oadetect analyze [--mode MODE]... [--entry Class.method] SOURCES...
    oadetect corpus --root DIR [--modes nopa,pa] [--reps N] [--out DIR]
    oadetect dump-graph --mode nopa|pa --entry Class.method SOURCES...
    oadetect dump-pts SOURCES...

`analyze` prints one human-readable report per conflict and exits 0 when
every requested mode is conflict-free, 1 when any mode reports a conflict,
2 when any mode times out (and none conflicts), 3 on usage or parse errors.
`corpus` evaluates scenario directories and writes the records stream plus
the confusion/metrics/transitions/histogram/timing tables.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .cha import build_cha_graph
from .engine import AnalysisBudget, Mode, Verdict, detect
from .frontend import ProvenanceMap, SourceUnit, apply_sidecar, entry_candidates, parse_program
from .harness import load_corpus, load_scenario, run_corpus, write_tables
from .mir import MirError, find_method
from .pointsto import dump_pts, pa_entry_points, solve
from .reporting import build_reports, emit_records, render_text
from .stats import InsufficientPairsError, wilcoxon_signed_rank

EXIT_FALSE = 0
EXIT_TRUE = 1
EXIT_TIMEOUT = 2
EXIT_ERROR = 3


def _budget(args) -> AnalysisBudget:
    return AnalysisBudget(
        depth_limit=args.depth,
        fuel=args.fuel,
        wall_clock=None if getattr(args, "deterministic", False) else args.timeout,
        path_cap=args.path_cap,
    )


def _add_budget_flags(sub) -> None:
    sub.add_argument("--depth", type=int, default=5, help="call inlining depth limit")
    sub.add_argument("--fuel", type=int, default=500_000, help="statement-visit budget")
    sub.add_argument("--timeout", type=float, default=300.0, help="wall-clock limit in seconds")
    sub.add_argument("--path-cap", type=int, default=4096, help="maximum enumerated paths")
    sub.add_argument(
        "--deterministic",
        action="store_true",
        help="disable the wall clock and zero elapsed times for byte-stable output",
    )


def _load_sources(paths: list[str]) -> list[SourceUnit]:
    units: list[SourceUnit] = []
    for raw in paths:
        path = Path(raw)
        if path.is_dir():
            for f in sorted(path.glob("*.mir")):
                units.append(SourceUnit(f.name, f.read_text()))
        else:
            units.append(SourceUnit(path.name, path.read_text()))
    return units


def _parse_modes(values: list[str]) -> list[Mode]:
    if not values:
        return [Mode.NOPA]
    return [Mode(v) for v in values]


def cmd_analyze(args) -> int:
    entry_override = args.entry
    sidecar = ProvenanceMap.from_json(Path(args.sidecar).read_text()) if args.sidecar else None
    single = Path(args.sources[0]) if len(args.sources) == 1 else None
    if single is not None and (single / "scenario.json").exists():
        scenario = load_scenario(single)
        units = scenario.sources
        sidecar = sidecar or scenario.sidecar
        entry_override = entry_override or scenario.entry
    else:
        units = _load_sources(args.sources)
    program = parse_program(units)
    if sidecar is not None:
        apply_sidecar(program, sidecar)
    entries = (
        [find_method(program, entry_override)] if entry_override else entry_candidates(program)
    )
    if not entries:
        print("no dually modified declaration to analyze", file=sys.stderr)
        return EXIT_ERROR
    budget = _budget(args)
    modes = _parse_modes(args.mode)

    outcomes = []
    any_true = any_timeout = False
    for entry in entries:
        for mode in modes:
            outcome = detect(program, entry, mode, budget=budget)
            unit = entry.id if len(entries) > 1 else entry.display
            outcomes.append((f"{unit}:{mode.value}", mode, outcome))
            print(f"== {entry.display} [{mode.value}] verdict: {outcome.verdict.value}")
            for report in build_reports(outcome, entry):
                print(render_text(report))
            any_true = any_true or outcome.verdict is Verdict.TRUE
            any_timeout = any_timeout or outcome.verdict is Verdict.TIMEOUT
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "records.jsonl").write_text(emit_records(outcomes))
    if any_true:
        return EXIT_TRUE
    if any_timeout:
        return EXIT_TIMEOUT
    return EXIT_FALSE


def cmd_corpus(args) -> int:
    root = Path(args.root)
    if (root / "scenario.json").exists():
        corpus = [load_scenario(root)]
    else:
        corpus = load_corpus(root)
    if not corpus:
        print(f"no scenarios under {root}", file=sys.stderr)
        return EXIT_ERROR
    modes = [Mode(v) for v in args.modes.split(",")]
    run = run_corpus(
        corpus,
        modes,
        budget=_budget(args),
        reps=args.reps,
        measure_time=not args.deterministic,
    )
    outdir = Path(args.out)
    write_tables(run, modes, outdir)
    for sid, message in run.errors:
        print(f"scenario error: {sid}: {message}", file=sys.stderr)
    for r in run.results:
        print(f"{r.unit}\t{r.mode.value}\t{r.verdict.value}")
    if len(modes) >= 2:
        samples: dict = {}
        for r in run.results:
            samples.setdefault(r.unit, {})[r.mode] = r.timings_ms
        pairs = [
            (sum(s[modes[0]]) / len(s[modes[0]]), sum(s[modes[1]]) / len(s[modes[1]]))
            for s in samples.values()
            if modes[0] in s and modes[1] in s
        ]
        try:
            res = wilcoxon_signed_rank(pairs)
            print(f"wilcoxon W={res.w} p={res.p_value:.4f} n={res.n}")
        except InsufficientPairsError as e:
            print(f"wilcoxon skipped: {e}")
    print(f"tables written to {outdir}")
    verdicts = {r.verdict for r in run.results}
    if Verdict.TRUE in verdicts:
        return EXIT_TRUE
    if Verdict.TIMEOUT in verdicts:
        return EXIT_TIMEOUT
    return EXIT_FALSE


def cmd_dump_graph(args) -> int:
    program = parse_program(_load_sources(args.sources))
    if args.sidecar:
        apply_sidecar(program, ProvenanceMap.from_json(Path(args.sidecar).read_text()))
    mode = Mode(args.mode)
    if mode is Mode.NOPA:
        entries = (
            [find_method(program, args.entry)] if args.entry else entry_candidates(program)
        )
        if not entries:
            print("an entry is required for the hierarchy-based graph", file=sys.stderr)
            return EXIT_ERROR
        print(build_cha_graph(program, entries[0]).dump(), end="")
    else:
        result = solve(program, pa_entry_points(program))
        print(result.callgraph.dump(), end="")
    return EXIT_FALSE


def cmd_dump_pts(args) -> int:
    program = parse_program(_load_sources(args.sources))
    result = solve(program, pa_entry_points(program))
    print(dump_pts(result), end="")
    return EXIT_FALSE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oadetect", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    analyze = sub.add_parser("analyze", help="analyze sources for override-assignment conflicts")
    analyze.add_argument("sources", nargs="+", help="source files or scenario directories")
    analyze.add_argument("--mode", action="append", choices=[m.value for m in Mode], default=[])
    analyze.add_argument("--entry", help="entry as Class.method (default: dually modified methods)")
    analyze.add_argument("--sidecar", help="provenance line-map JSON file")
    analyze.add_argument("--out", help="directory for machine records")
    _add_budget_flags(analyze)
    analyze.set_defaults(func=cmd_analyze)

    corpus = sub.add_parser("corpus", help="evaluate a corpus of scenario directories")
    corpus.add_argument("--root", required=True, help="directory of scenario directories")
    corpus.add_argument("--modes", default="nopa,pa", help="comma-separated mode list")
    corpus.add_argument("--reps", type=int, default=10, help="timing repetitions per unit")
    corpus.add_argument("--out", default="oa-results", help="output directory for tables")
    _add_budget_flags(corpus)
    corpus.set_defaults(func=cmd_corpus)

    dump_graph = sub.add_parser("dump-graph", help="print the call graph, one edge per line")
    dump_graph.add_argument("sources", nargs="+")
    dump_graph.add_argument("--mode", choices=["nopa", "pa"], default="nopa")
    dump_graph.add_argument("--entry")
    dump_graph.add_argument("--sidecar")
    dump_graph.set_defaults(func=cmd_dump_graph)

    dump_pts_cmd = sub.add_parser("dump-pts", help="print points-to sets and miss sites")
    dump_pts_cmd.add_argument("sources", nargs="+")
    dump_pts_cmd.set_defaults(func=cmd_dump_pts)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except MirError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
