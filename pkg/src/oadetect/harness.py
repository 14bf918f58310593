"""Corpus runner and evaluation tables.

Scenarios are directories with a `scenario.json` manifest naming the source
files, an optional sidecar line map, an optional entry override, and an
optional ground-truth label. Each dually modified declaration of a scenario
becomes one experimental unit; every unit runs once per mode, repeated for
timing, with the verdict required to agree across repetitions.

The table builders mirror the usual comparison methodology: a confusion
matrix against labels (timeouts excluded from scoring), derived accuracy
metrics, a verdict-transition cross-tab between two modes, a per-project
divergence histogram, and paired timing summaries.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean, stdev
from typing import Optional

from .cha import build_cha_graph
from .engine import AnalysisBudget, AnalysisOutcome, Mode, Verdict, detect
from .frontend import ProvenanceMap, SourceUnit, apply_sidecar, entry_candidates, parse_program
from .mir import MethodDef, MirError, Program, find_method
from .pointsto import pa_entry_points, solve
from .reporting import emit_records


@dataclass
class Scenario:
    id: str
    project: str
    sources: list[SourceUnit]
    sidecar: Optional[ProvenanceMap] = None
    entry: Optional[str] = None
    ground_truth: Optional[bool] = None


def load_scenario(directory: Path) -> Scenario:
    directory = Path(directory)
    manifest = json.loads((directory / "scenario.json").read_text())
    sources = [
        SourceUnit(name, (directory / name).read_text())
        for name in manifest["sources"]
    ]
    sidecar = None
    if manifest.get("sidecar"):
        sidecar = ProvenanceMap.from_json((directory / manifest["sidecar"]).read_text())
    truth = manifest.get("ground_truth")
    return Scenario(
        id=manifest["id"],
        project=manifest.get("project", manifest["id"]),
        sources=sources,
        sidecar=sidecar,
        entry=manifest.get("entry"),
        ground_truth=None if truth is None else truth == "true",
    )


def bundled_corpus_dir() -> Path:
    return Path(__file__).parent / "corpus"


def load_bundled(name: str) -> Scenario:
    return load_scenario(bundled_corpus_dir() / name)


def load_corpus(root: Path) -> list[Scenario]:
    root = Path(root)
    dirs = sorted(d for d in root.iterdir() if (d / "scenario.json").exists())
    return [load_scenario(d) for d in dirs]


# ---------------------------------------------------------------------------
# Running


@dataclass
class UnitResult:
    unit: str
    project: str
    mode: Mode
    verdict: Verdict
    outcome: AnalysisOutcome
    timings_ms: list[float]
    ground_truth: Optional[bool]
    entry: MethodDef


@dataclass
class CorpusRun:
    results: list[UnitResult] = field(default_factory=list)
    errors: list[tuple[str, str]] = field(default_factory=list)

    def verdicts(self, mode: Mode) -> dict[str, Verdict]:
        return {r.unit: r.verdict for r in self.results if r.mode is mode}

    def truths(self) -> dict[str, Optional[bool]]:
        return {r.unit: r.ground_truth for r in self.results}

    def projects(self) -> dict[str, str]:
        return {r.unit: r.project for r in self.results}

    def units(self) -> list[str]:
        seen: list[str] = []
        for r in self.results:
            if r.unit not in seen:
                seen.append(r.unit)
        return seen


def scenario_units(s: Scenario) -> tuple[Program, list[tuple[str, MethodDef]]]:
    """Parse a scenario and expand it to (unit id, entry) pairs."""
    program = parse_program(s.sources)
    if s.sidecar is not None:
        apply_sidecar(program, s.sidecar)
    if s.entry:
        entries = [find_method(program, s.entry)]
    else:
        entries = entry_candidates(program)
    if not entries:
        raise MirError(f"scenario '{s.id}' has no dually modified declaration")
    if len(entries) == 1:
        return program, [(s.id, entries[0])]
    return program, [(f"{s.id}#{m.id}", m) for m in entries]


def run_scenario(
    s: Scenario,
    modes: list[Mode],
    budget: Optional[AnalysisBudget] = None,
    reps: int = 1,
    measure_time: bool = False,
) -> list[UnitResult]:
    if reps < 1:
        raise ValueError("reps must be >= 1")
    budget = budget or AnalysisBudget()
    program, units = scenario_units(s)

    needs_pts = any(m in (Mode.PA, Mode.HYBRID) for m in modes)
    pts = solve(program, pa_entry_points(program)) if needs_pts else None

    out: list[UnitResult] = []
    for unit_id, entry in units:
        cha = (
            build_cha_graph(program, entry)
            if any(m in (Mode.NOPA, Mode.HYBRID) for m in modes)
            else None
        )
        for mode in modes:
            verdict = None
            outcome = None
            timings: list[float] = []
            for _ in range(reps):
                t0 = time.perf_counter()
                outcome = detect(program, entry, mode, budget=budget, cha=cha, pts=pts)
                elapsed = (time.perf_counter() - t0) * 1000.0
                timings.append(elapsed if measure_time else 0.0)
                if verdict is None:
                    verdict = outcome.verdict
                elif verdict is not outcome.verdict:
                    raise MirError(
                        f"nondeterministic verdict for {unit_id} under {mode.value}"
                    )
            if not measure_time:
                outcome.stats.elapsed_ms = 0
            out.append(
                UnitResult(
                    unit=unit_id,
                    project=s.project,
                    mode=mode,
                    verdict=verdict,
                    outcome=outcome,
                    timings_ms=timings,
                    ground_truth=s.ground_truth,
                    entry=entry,
                )
            )
    return out


def run_corpus(
    corpus: list[Scenario],
    modes: list[Mode],
    budget: Optional[AnalysisBudget] = None,
    reps: int = 1,
    measure_time: bool = False,
) -> CorpusRun:
    run = CorpusRun()
    for s in corpus:
        try:
            run.results.extend(run_scenario(s, modes, budget, reps, measure_time))
        except MirError as e:
            run.errors.append((s.id, str(e)))
    return run


# ---------------------------------------------------------------------------
# Tables


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    excluded: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsSummary:
    precision: Optional[float]
    recall: Optional[float]
    accuracy: Optional[float]
    f1: Optional[float]

    def rounded(self) -> dict:
        return {
            k: (None if v is None else round(v, 2))
            for k, v in (
                ("precision", self.precision),
                ("recall", self.recall),
                ("accuracy", self.accuracy),
                ("f1", self.f1),
            )
        }


def confusion(outcomes: dict[str, Verdict], truths: dict[str, bool]) -> ConfusionMatrix:
    """Score verdicts against labels; timeouts are excluded, not guessed."""
    cm = ConfusionMatrix()
    for unit, verdict in outcomes.items():
        if unit not in truths or truths[unit] is None:
            raise MirError(f"unit '{unit}' has no ground-truth label")
        if verdict is Verdict.TIMEOUT:
            cm.excluded += 1
            continue
        positive = verdict is Verdict.TRUE
        if positive and truths[unit]:
            cm.tp += 1
        elif positive:
            cm.fp += 1
        elif truths[unit]:
            cm.fn += 1
        else:
            cm.tn += 1
    return cm


def metrics(cm: ConfusionMatrix) -> MetricsSummary:
    if cm.total <= 0:
        raise MirError("empty confusion matrix")

    def ratio(num: int, den: int) -> Optional[float]:
        return num / den if den > 0 else None

    return MetricsSummary(
        precision=ratio(cm.tp, cm.tp + cm.fp),
        recall=ratio(cm.tp, cm.tp + cm.fn),
        accuracy=ratio(cm.tp + cm.tn, cm.total),
        f1=ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn),
    )


VERDICTS = (Verdict.TRUE, Verdict.FALSE, Verdict.TIMEOUT)


@dataclass
class TransitionTable:
    counts: dict = field(default_factory=dict)

    def cell(self, a: Verdict, b: Verdict) -> int:
        return self.counts.get((a, b), 0)

    def row_marginal(self, a: Verdict) -> int:
        return sum(self.cell(a, b) for b in VERDICTS)

    def col_marginal(self, b: Verdict) -> int:
        return sum(self.cell(a, b) for a in VERDICTS)


def transitions(a: dict[str, Verdict], b: dict[str, Verdict]) -> TransitionTable:
    if set(a) != set(b):
        raise MirError("transition tables need the same unit set under both modes")
    table = TransitionTable()
    for unit, va in a.items():
        key = (va, b[unit])
        table.counts[key] = table.counts.get(key, 0) + 1
    return table


def divergence_histogram(units: list[tuple[str, Verdict, Verdict]]) -> dict[int, int]:
    """Per-project count of units where two modes disagree, as a histogram.

    Projects with no divergence are omitted; a timeout disagrees with
    anything but another timeout.
    """
    per_project: dict[str, int] = {}
    for project, va, vb in units:
        per_project.setdefault(project, 0)
        if va is not vb:
            per_project[project] += 1
    hist: dict[int, int] = {}
    for n in per_project.values():
        if n > 0:
            hist[n] = hist.get(n, 0) + 1
    return dict(sorted(hist.items()))


@dataclass
class TimingRow:
    unit: str
    mode: Mode
    mean_ms: float
    stddev_ms: float
    flagged: bool  # standard deviation above 10% of the mean


@dataclass
class TimingSummary:
    rows: list[TimingRow]
    grand_mean_ms: dict[Mode, float]
    winner_counts: dict[Mode, int]
    flagged_counts: dict[Mode, int]


def timing_summary(samples: dict[str, dict[Mode, list[float]]]) -> TimingSummary:
    """Per-unit means/deviations, per-mode grand means, and per-unit winners."""
    reps = {len(s) for per_mode in samples.values() for s in per_mode.values()}
    if len(reps) > 1:
        raise MirError(f"unequal repetition counts across units: {sorted(reps)}")
    rows: list[TimingRow] = []
    per_mode_means: dict[Mode, list[float]] = {}
    winner_counts: dict[Mode, int] = {}
    flagged_counts: dict[Mode, int] = {}
    for unit in samples:
        unit_means: dict[Mode, float] = {}
        for mode, values in samples[unit].items():
            m = mean(values)
            sd = stdev(values) if len(values) > 1 else 0.0
            flagged = m > 0 and sd / m > 0.10
            rows.append(TimingRow(unit, mode, m, sd, flagged))
            unit_means[mode] = m
            per_mode_means.setdefault(mode, []).append(m)
            if flagged:
                flagged_counts[mode] = flagged_counts.get(mode, 0) + 1
        if len(unit_means) > 1:
            winner = min(sorted(unit_means, key=lambda mo: mo.value), key=lambda mo: unit_means[mo])
            winner_counts[winner] = winner_counts.get(winner, 0) + 1
    grand = {mode: mean(values) for mode, values in per_mode_means.items()}
    return TimingSummary(rows, grand, winner_counts, flagged_counts)


def annotate_missref_paths(run: CorpusRun, nopa: Mode = Mode.NOPA, pa: Mode = Mode.PA) -> list[dict]:
    """For units the precise mode cleared but the conservative one flagged,
    mark whether any miss-reference sits on a reported conflict flow."""
    by_unit: dict[str, dict[Mode, UnitResult]] = {}
    for r in run.results:
        by_unit.setdefault(r.unit, {})[r.mode] = r
    enriched = []
    for unit, per_mode in by_unit.items():
        if nopa not in per_mode or pa not in per_mode:
            continue
        a, b = per_mode[nopa], per_mode[pa]
        if a.verdict is not Verdict.TRUE or b.verdict is not Verdict.FALSE:
            continue
        trace_positions = set()
        for c in a.outcome.conflicts:
            for ev in (c.overridden, c.overriding):
                trace_positions.update(h.pos for h in ev.call_path)
                trace_positions.add(ev.pos)
        on_path = False
        for miss in b.outcome.missrefs:
            miss.on_conflict_path = miss.pos in trace_positions
            on_path = on_path or miss.on_conflict_path
        enriched.append(
            {
                "unit": unit,
                "missrefs": len(b.outcome.missrefs),
                "on_conflict_path": on_path,
            }
        )
    return enriched


# ---------------------------------------------------------------------------
# Output files


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.2f}"


def write_tables(run: CorpusRun, modes: list[Mode], outdir: Path) -> None:
    """The record stream plus confusion/metrics/transitions/histogram/timing CSVs."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    records = emit_records([(r.unit, r.mode, r.outcome) for r in run.results])
    (outdir / "records.jsonl").write_text(records)

    labeled_units = [u for u, t in run.truths().items() if t is not None]
    # Units that time out under any evaluated mode are excluded from every
    # mode's scoring so the totals stay comparable.
    timeout_units = {
        r.unit for r in run.results if r.verdict is Verdict.TIMEOUT
    }
    with (outdir / "confusion.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "tp", "fp", "tn", "fn", "excluded"])
        for mode in modes:
            verdicts = run.verdicts(mode)
            scored = {
                u: verdicts[u]
                for u in labeled_units
                if u in verdicts and u not in timeout_units
            }
            cm = confusion(scored, {u: run.truths()[u] for u in scored})
            cm.excluded = len([u for u in labeled_units if u in timeout_units and u in verdicts])
            w.writerow([mode.value, cm.tp, cm.fp, cm.tn, cm.fn, cm.excluded])

    with (outdir / "metrics.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "precision", "recall", "accuracy", "f1"])
        for mode in modes:
            verdicts = run.verdicts(mode)
            scored = {
                u: verdicts[u]
                for u in labeled_units
                if u in verdicts and u not in timeout_units
            }
            if not scored:
                w.writerow([mode.value, "", "", "", ""])
                continue
            ms = metrics(confusion(scored, {u: run.truths()[u] for u in scored}))
            w.writerow([mode.value, _fmt(ms.precision), _fmt(ms.recall), _fmt(ms.accuracy), _fmt(ms.f1)])

    with (outdir / "transitions.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode_a", "mode_b", "a_verdict", "b_verdict", "count"])
        for i, ma in enumerate(modes):
            for mb in modes[i + 1 :]:
                table = transitions(run.verdicts(ma), run.verdicts(mb))
                for va in VERDICTS:
                    for vb in VERDICTS:
                        w.writerow([ma.value, mb.value, va.value, vb.value, table.cell(va, vb)])

    with (outdir / "histogram.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["divergences", "projects"])
        if len(modes) >= 2:
            va, vb = run.verdicts(modes[0]), run.verdicts(modes[1])
            units = [
                (run.projects()[u], va[u], vb[u]) for u in run.units() if u in va and u in vb
            ]
            for n, count in divergence_histogram(units).items():
                w.writerow([n, count])

    with (outdir / "timing.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "mode", "mean_ms", "stddev_ms", "flagged"])
        samples: dict[str, dict[Mode, list[float]]] = {}
        for r in run.results:
            samples.setdefault(r.unit, {})[r.mode] = r.timings_ms
        if samples:
            summary = timing_summary(samples)
            for row in summary.rows:
                w.writerow(
                    [row.unit, row.mode.value, f"{row.mean_ms:.3f}", f"{row.stddev_ms:.3f}", str(row.flagged).lower()]
                )
