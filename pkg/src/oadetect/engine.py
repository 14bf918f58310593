"""Override-assignment conflict detection.

The detector enumerates execution paths from an entry method, collecting
the ordered write events each path performs, then scans every path for a
changed write that overrides the other side's most recent write to the same
state element with no base write in between.

State elements follow the assignment left-hand-side taxonomy:

    LV   local variable            same method, same name
    IFR  instance field reference  same field; bases related by hierarchy
                                   (nopa) or overlapping points-to (pa)
    AR   array reference           like IFR with the index as the field
    SFR  static field reference    same declaring class, name, and type

Three modes share the traversal. `nopa` resolves calls by class hierarchy
and compares by names and types. `pa` resolves and compares through
points-to sets, logging a miss-reference and falling back to the name/type
rule whenever a set is empty or a call target cannot be resolved. `hybrid`
is `pa` that additionally widens unresolvable calls to the hierarchy-based
targets instead of dropping them.

Writes reached through a changed call site inherit that side's provenance,
so a base-code write counts for the developer whose added call executes it.
Budgets make runs reproducible: a statement-visit fuel and a path cap bound
the enumeration deterministically, with an optional wall-clock limit on top;
exhausting any of them yields a TIMEOUT verdict.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from enum import Enum
from typing import Iterator, NamedTuple, Optional

from .cha import CallGraph, build_cha_graph, initial_env, resolve_static, transfer_type, _operand_type, _resolve_virtual
from .mir import (
    AllocAssign,
    ArrayAlloc,
    ArrayLoad,
    ArrayStore,
    CopyAssign,
    FieldLoad,
    FieldStore,
    If,
    MethodDef,
    MirError,
    OpaqueOp,
    Position,
    Program,
    Provenance,
    ReflectiveAssign,
    Return,
    StaticCall,
    StaticLoad,
    StaticStore,
    VirtualCall,
    While,
    methods_by_id,
    resolve_field,
    resolve_static_field,
    resolve_unique_field,
    subtype_of,
)
from .pointsto import PointsToResult, pa_entry_points, solve


class Mode(Enum):
    NOPA = "nopa"
    PA = "pa"
    HYBRID = "hybrid"


class Verdict(Enum):
    TRUE = "true"
    FALSE = "false"
    TIMEOUT = "timeout"


LV, IFR, AR, SFR = "LV", "IFR", "AR", "SFR"


@dataclass
class AnalysisBudget:
    depth_limit: int = 5
    fuel: int = 500_000
    wall_clock: Optional[float] = 300.0
    path_cap: int = 4096


class Hop(NamedTuple):
    method_id: str
    method_display: str
    pos: Position
    provenance: Provenance


@dataclass(frozen=True)
class WriteEvent:
    kind: str
    pos: Position
    provenance: Provenance
    method_id: str
    method_display: str
    method_class: str
    enclosing_kind: str  # "method" | "constructor"
    call_path: tuple[Hop, ...] = ()
    local: Optional[str] = None
    base: Optional[str] = None
    base_type: Optional[str] = None
    base_pts: Optional[frozenset] = None
    field: Optional[tuple] = None  # (declaring class, name, type) when resolved
    field_name: Optional[str] = None
    index: Optional[object] = None
    static_cls: Optional[str] = None
    static_type: Optional[str] = None

    @property
    def root_pos(self) -> Position:
        return self.call_path[0].pos if self.call_path else self.pos

    def element_text(self) -> str:
        if self.kind == LV:
            return f"{self.local} in {self.method_display}"
        if self.kind == IFR:
            if self.field is not None:
                decl, name, ftype = self.field
                return f"{self.base}.<{decl}: {ftype} {name}>"
            return f"{self.base}.{self.field_name}"
        if self.kind == AR:
            return f"{self.base}[{self.index}]"
        return f"<{self.static_cls}: {self.static_type} {self.field_name}>"

    def element_key(self) -> tuple:
        if self.kind == LV:
            return (LV, self.method_id, self.local)
        if self.kind == IFR:
            return (IFR, self.field or self.field_name)
        if self.kind == AR:
            return (AR, self.base_type, str(self.index))
        return (SFR, self.static_cls, self.field_name, self.static_type)


@dataclass
class MissRef:
    pos: Position
    expression: str
    reason: str  # "empty-pts" | "unresolved-call"
    on_conflict_path: bool = False


@dataclass
class Conflict:
    element: str
    overridden: WriteEvent
    overriding: WriteEvent

    @property
    def key(self) -> tuple:
        return (
            self.overriding.element_key(),
            self.overridden.root_pos,
            self.overriding.root_pos,
            self.overridden.pos,
            self.overriding.pos,
        )


@dataclass
class OutcomeStats:
    visited: int = 0
    paths: int = 0
    elapsed_ms: int = 0


@dataclass
class AnalysisOutcome:
    verdict: Verdict
    conflicts: list[Conflict] = dc_field(default_factory=list)
    missrefs: list[MissRef] = dc_field(default_factory=list)
    stats: OutcomeStats = dc_field(default_factory=OutcomeStats)


class ComparisonResult(NamedTuple):
    match: bool
    fell_back: bool
    missrefs: tuple


_NO_MISS: tuple = ()


def _kinds(a: WriteEvent, b: WriteEvent, expected: str) -> None:
    if a.kind != expected or b.kind != expected:
        raise MirError(f"expected two {expected} events, got {a.kind} and {b.kind}")


def compare_local(a: WriteEvent, b: WriteEvent) -> ComparisonResult:
    """Locals conflict only inside one method under the same name."""
    _kinds(a, b, LV)
    match = a.method_id == b.method_id and a.local == b.local
    return ComparisonResult(match, False, _NO_MISS)


def _same_constructor(a: WriteEvent, b: WriteEvent) -> bool:
    return (
        a.enclosing_kind == "constructor"
        and b.enclosing_kind == "constructor"
        and a.method_id == b.method_id
    )


def _types_related(a: Optional[str], b: Optional[str], p: Program) -> bool:
    # Unknown types stay match-eligible: the name/type rule is conservative.
    if a is None or b is None:
        return True
    if a == b:
        return True
    if a.endswith("[]") or b.endswith("[]"):
        return False
    if not p.declares_type(a) or not p.declares_type(b):
        return False
    return subtype_of(a, b, p) or subtype_of(b, a, p)


def _fields_match(a: WriteEvent, b: WriteEvent) -> bool:
    if a.field is not None and b.field is not None:
        return a.field == b.field
    return a.field_name == b.field_name


def _miss_for(ev: WriteEvent, expression: str) -> MissRef:
    return MissRef(ev.pos, expression, "empty-pts")


def _base_types_related(a: WriteEvent, b: WriteEvent, p: Program) -> bool:
    ea = a.base_type[:-2] if a.base_type and a.base_type.endswith("[]") else a.base_type
    eb = b.base_type[:-2] if b.base_type and b.base_type.endswith("[]") else b.base_type
    return _types_related(ea, eb, p)


def compare_instance_field(a: WriteEvent, b: WriteEvent, mode: Mode, ctx) -> ComparisonResult:
    """Field writes alias by base type relation (nopa) or points-to overlap (pa)."""
    _kinds(a, b, IFR)
    nopa = (
        _fields_match(a, b)
        and _base_types_related(a, b, ctx.program)
        and not _same_constructor(a, b)
    )
    if mode is Mode.NOPA:
        return ComparisonResult(nopa, False, _NO_MISS)
    misses = tuple(
        _miss_for(ev, f"{ev.base}.{ev.field_name}") for ev in (a, b) if not ev.base_pts
    )
    if misses:
        return ComparisonResult(nopa, True, misses)
    overlap = bool(a.base_pts & b.base_pts)
    match = overlap and _fields_match(a, b) and not _same_constructor(a, b)
    return ComparisonResult(match, False, _NO_MISS)


def _indexes_match(a: WriteEvent, b: WriteEvent) -> bool:
    ia, ib = a.index, b.index
    if isinstance(ia, int) and isinstance(ib, int):
        return ia == ib
    if isinstance(ia, str) and isinstance(ib, str):
        return ia == ib and a.method_id == b.method_id
    return True  # constant vs local: unknown, stays match-eligible


def compare_array(a: WriteEvent, b: WriteEvent, mode: Mode, ctx) -> ComparisonResult:
    """Array writes: like instance fields with indexes in the field role."""
    _kinds(a, b, AR)
    nopa = (
        _indexes_match(a, b)
        and _base_types_related(a, b, ctx.program)
        and not _same_constructor(a, b)
    )
    if mode is Mode.NOPA:
        return ComparisonResult(nopa, False, _NO_MISS)
    misses = tuple(
        _miss_for(ev, f"{ev.base}[{ev.index}]") for ev in (a, b) if not ev.base_pts
    )
    if misses:
        return ComparisonResult(nopa, True, misses)
    overlap = bool(a.base_pts & b.base_pts)
    match = overlap and _indexes_match(a, b) and not _same_constructor(a, b)
    return ComparisonResult(match, False, _NO_MISS)


def compare_static_field(a: WriteEvent, b: WriteEvent) -> ComparisonResult:
    """Static fields are equal by declaring class, name, and declared type."""
    _kinds(a, b, SFR)
    match = (
        a.static_cls == b.static_cls
        and a.field_name == b.field_name
        and a.static_type == b.static_type
    )
    return ComparisonResult(match, False, _NO_MISS)


def same_element(a: WriteEvent, b: WriteEvent, mode: Mode, ctx=None) -> bool:
    """Dispatch on the element kind; records miss-references into ctx."""
    if a.kind != b.kind:
        return False
    if a.kind == LV:
        res = compare_local(a, b)
    elif a.kind == IFR:
        res = compare_instance_field(a, b, mode, ctx)
    elif a.kind == AR:
        res = compare_array(a, b, mode, ctx)
    else:
        res = compare_static_field(a, b)
    if ctx is not None:
        for miss in res.missrefs:
            ctx.record_missref(miss)
    return res.match


# ---------------------------------------------------------------------------
# Detection context and call resolution


class _BudgetStop(Exception):
    pass


class DetectionContext:
    def __init__(
        self,
        program: Program,
        mode: Mode,
        budget: AnalysisBudget,
        cha: Optional[CallGraph] = None,
        pts: Optional[PointsToResult] = None,
    ):
        self.program = program
        self.mode = mode
        self.budget = budget
        self.cha = cha
        self.pts = pts
        self.by_id = methods_by_id(program)
        self.visited = 0
        self.paths = 0
        self.timed_out = False
        self.missrefs: dict[tuple, MissRef] = {}
        self._deadline = (
            time.monotonic() + budget.wall_clock if budget.wall_clock is not None else None
        )

    def record_missref(self, miss: MissRef) -> None:
        self.missrefs.setdefault((miss.pos, miss.expression, miss.reason), miss)

    def tick(self) -> None:
        self.visited += 1
        if self.visited > self.budget.fuel:
            self.timed_out = True
            raise _BudgetStop()
        if self._deadline is not None and self.visited % 512 == 0:
            if time.monotonic() > self._deadline:
                self.timed_out = True
                raise _BudgetStop()

    def count_path(self) -> None:
        self.paths += 1
        if self.paths > self.budget.path_cap:
            self.timed_out = True
            raise _BudgetStop()

    def base_pts(self, mid: str, local: str) -> Optional[frozenset]:
        if self.mode is Mode.NOPA or self.pts is None:
            return None
        got = self.pts.pts.get(("l", mid, local), frozenset())
        return got if got else None


def resolve_call(st: VirtualCall, caller_mid: str, ctx: DetectionContext):
    """Targets of a virtual site under the context's mode.

    Returns (methods, missref-or-None). In pa mode an unresolvable site
    contributes no targets; hybrid widens it to the hierarchy-based targets.
    """
    p = ctx.program

    def cha_targets() -> list[MethodDef]:
        ids = ctx.cha.targets_at(st.pos) if ctx.cha is not None else []
        if not ids and (ctx.cha is None or not ctx.cha.has_site(st.pos)):
            defs = _resolve_virtual(p, None, st.method, len(st.args), st.pos)
            ids = sorted(m.id for m in defs)
        return [ctx.by_id[i] for i in ids]

    if ctx.mode is Mode.NOPA:
        return cha_targets(), None

    pa_ids = ctx.pts.callgraph.targets_at(st.pos) if ctx.pts is not None else []
    if pa_ids:
        return [ctx.by_id[i] for i in pa_ids], None
    miss = MissRef(st.pos, f"{st.receiver}.{st.method}()", "unresolved-call")
    if ctx.mode is Mode.PA:
        return [], miss
    return cha_targets(), miss


# ---------------------------------------------------------------------------
# Path enumeration
#
# The enumerator is an explicit-stack machine rather than recursion: a single
# path may inline thousands of statements, well past Python's stack. Frames
# hold a block in progress; choice points (branches, loops, multi-target
# calls) snapshot frame cursors and the event count, and backtracking
# restores them. Envs are copy-on-write, so snapshots can share references.


class _Frame:
    __slots__ = ("stmts", "i", "env", "method", "call_path", "on_stack", "kind", "site")

    def __init__(self, stmts, env, method, call_path, on_stack, kind, site=None):
        self.stmts = stmts
        self.i = 0
        self.env = env
        self.method = method
        self.call_path = call_path
        self.on_stack = on_stack
        self.kind = kind  # "root" | "body" | "block"
        self.site = site  # call statement for body frames


class _Enumerator:
    def __init__(self, ctx: DetectionContext, entry: MethodDef):
        self.ctx = ctx
        self.entry = entry
        self.events: list[WriteEvent] = []
        self.frames: list[_Frame] = []
        self.choices: list = []  # (frame list, per-frame (i, env), events length, alternatives)

    # -- event construction

    def _prov(self, st, call_path) -> Provenance:
        if st.provenance is not Provenance.BASE:
            return st.provenance
        for hop in reversed(call_path):
            if hop.provenance is not Provenance.BASE:
                return hop.provenance
        return Provenance.BASE

    def _event(self, st, method: MethodDef, call_path, **payload) -> WriteEvent:
        return WriteEvent(
            pos=st.pos,
            provenance=self._prov(st, call_path),
            method_id=method.id,
            method_display=method.display,
            method_class=method.declaring_class,
            enclosing_kind=method.kind,
            call_path=call_path,
            **payload,
        )

    def _lv(self, st, frame: _Frame, target) -> WriteEvent:
        return self._event(st, frame.method, frame.call_path, kind=LV, local=target)

    def _simple_event(self, st, frame: _Frame) -> Optional[WriteEvent]:
        p = self.ctx.program
        if isinstance(st, (CopyAssign, ReflectiveAssign, OpaqueOp, ArrayAlloc,
                           FieldLoad, StaticLoad, ArrayLoad, AllocAssign)):
            return self._lv(st, frame, st.target)
        if isinstance(st, FieldStore):
            base_type = frame.env.get(st.base)
            hit = resolve_field(p, base_type, st.field) or resolve_unique_field(p, st.field)
            triple = (hit[0], st.field, hit[1].type) if hit is not None else None
            return self._event(
                st, frame.method, frame.call_path,
                kind=IFR, base=st.base, base_type=base_type,
                base_pts=self.ctx.base_pts(frame.method.id, st.base),
                field=triple, field_name=st.field,
            )
        if isinstance(st, ArrayStore):
            return self._event(
                st, frame.method, frame.call_path,
                kind=AR, base=st.base, base_type=frame.env.get(st.base),
                base_pts=self.ctx.base_pts(frame.method.id, st.base),
                index=st.index,
            )
        if isinstance(st, StaticStore):
            hit = resolve_static_field(p, st.cls, st.field)
            decl, ftype = (hit[0], hit[1].type) if hit is not None else (st.cls, None)
            return self._event(
                st, frame.method, frame.call_path,
                kind=SFR, static_cls=decl, field_name=st.field, static_type=ftype,
            )
        return None

    # -- machine

    def paths(self) -> Iterator[list[WriteEvent]]:
        self.frames = [
            _Frame(self.entry.body, initial_env(self.entry), self.entry, (),
                   frozenset({self.entry.id}), "root")
        ]
        while True:
            if not self.frames:
                self.ctx.count_path()
                yield _collapse_redundant_locals(self.events)
                if not self._backtrack():
                    return
                continue
            frame = self.frames[-1]
            if frame.i >= len(frame.stmts):
                self._pop_frame()
                continue
            st = frame.stmts[frame.i]
            self.ctx.tick()
            self._step(frame, st)

    def _pop_frame(self) -> None:
        done = self.frames.pop()
        if done.kind == "block" and self.frames:
            self.frames[-1].env = done.env  # branch bindings flow onward
        elif done.kind == "body":
            self._complete_call(done.site)

    def _complete_call(self, st) -> None:
        frame = self.frames[-1]
        result = getattr(st, "result", None)
        if result is not None:
            self.events.append(self._lv(st, frame, result))
            env = dict(frame.env)
            env[result] = None
            frame.env = env

    def _step(self, frame: _Frame, st) -> None:
        if isinstance(st, If):
            frame.i += 1
            self._choose([("block", st.then_body), ("block", st.else_body)])
            return
        if isinstance(st, While):
            frame.i += 1
            self._choose([("skip",), ("block", st.body)])
            return
        if isinstance(st, Return):
            while self.frames:
                done = self.frames.pop()
                if done.kind == "body":
                    self._complete_call(done.site)
                    return
                if done.kind == "root":
                    return  # path ends at the loop head
            return
        if isinstance(st, VirtualCall):
            frame.i += 1
            targets, miss = resolve_call(st, frame.method.id, self.ctx)
            if miss is not None:
                self.ctx.record_missref(miss)
            self._branch_call(frame, st, targets)
            return
        if isinstance(st, StaticCall):
            frame.i += 1
            target = resolve_static(self.ctx.program, st)
            self._branch_call(frame, st, [target])
            return
        if isinstance(st, AllocAssign):
            self.events.append(self._lv(st, frame, st.target))
            frame.env = transfer_type(st, frame.env, self.ctx.program)
            frame.i += 1
            ctor = _ctor_of(self.ctx.program, st.cls, len(st.args))
            if ctor is not None and self._inlinable(frame, ctor):
                self._push_body(frame, st, ctor)
            return
        ev = self._simple_event(st, frame)
        if ev is not None:
            self.events.append(ev)
        frame.env = transfer_type(st, frame.env, self.ctx.program)
        frame.i += 1

    def _inlinable(self, frame: _Frame, target: MethodDef) -> bool:
        return (
            len(frame.call_path) < self.ctx.budget.depth_limit
            and target.id not in frame.on_stack
        )

    def _branch_call(self, frame: _Frame, st, targets) -> None:
        inlinable = [t for t in targets if self._inlinable(frame, t)]
        alts: list = []
        if len(inlinable) < len(targets) or not targets:
            # Depth or recursion cut (or no targets): the call contributes nothing.
            alts.append(("complete", st))
        alts.extend(("body", st, t) for t in inlinable)
        self._choose(alts)

    def _push_body(self, caller: _Frame, st, target: MethodDef) -> None:
        cenv = {}
        for pname, a in zip(target.params, st.args):
            cenv[pname] = _operand_type(a, caller.env, self.ctx.program)
        if not target.static:
            cenv["this"] = target.declaring_class
        hop = Hop(caller.method.id, caller.method.display, st.pos, st.provenance)
        self.frames.append(
            _Frame(target.body, cenv, target, caller.call_path + (hop,),
                   caller.on_stack | {target.id}, "body", site=st)
        )

    def _apply(self, alt) -> None:
        kind = alt[0]
        if kind == "block":
            parent = self.frames[-1]
            self.frames.append(
                _Frame(alt[1], parent.env, parent.method, parent.call_path,
                       parent.on_stack, "block")
            )
        elif kind == "body":
            self._push_body(self.frames[-1], alt[1], alt[2])
        elif kind == "complete":
            self._complete_call(alt[1])
        # "skip": nothing to do

    def _choose(self, alts: list) -> None:
        if len(alts) == 1:
            self._apply(alts[0])
            return
        snapshot = (list(self.frames), [(f.i, f.env) for f in self.frames], len(self.events))
        first, rest = alts[0], alts[1:]
        self.choices.append((snapshot, rest))
        self._apply(first)

    def _backtrack(self) -> bool:
        while self.choices:
            snapshot, rest = self.choices[-1]
            if not rest:
                self.choices.pop()
                continue
            alt = rest.pop(0)
            frames, cursors, events_len = snapshot
            del self.events[events_len:]
            self.frames = list(frames)
            for f, (i, env) in zip(self.frames, cursors):
                f.i = i
                f.env = env
            self._apply(alt)
            return True
        return False


def _ctor_of(p: Program, cls_name: str, arity: int):
    c = p.class_named(cls_name)
    if c is None:
        return None
    for ctor in c.constructors:
        if len(ctor.params) == arity:
            return ctor
    return None


def _collapse_redundant_locals(events: list[WriteEvent]) -> list[WriteEvent]:
    """Consecutive same-side writes to one local keep only the last."""
    out: list[WriteEvent] = []
    for ev in events:
        if (
            out
            and ev.kind == LV
            and out[-1].kind == LV
            and out[-1].method_id == ev.method_id
            and out[-1].local == ev.local
            and out[-1].provenance is ev.provenance
        ):
            out[-1] = ev
        else:
            out.append(ev)
    return out


def enumerate_write_paths(
    p: Program,
    entry: MethodDef,
    budget: Optional[AnalysisBudget] = None,
    mode: Mode = Mode.NOPA,
    cha: Optional[CallGraph] = None,
    pts: Optional[PointsToResult] = None,
    ctx: Optional[DetectionContext] = None,
) -> Iterator[list[WriteEvent]]:
    """Depth-first stream of per-path write-event sequences.

    Branches fork, loops run zero or one iteration, and calls inline their
    resolved targets up to the depth limit with recursion cut on the call
    stack. The stream simply ends when a budget runs out; callers that need
    to distinguish that pass their own context and check `timed_out`.
    """
    if ctx is None:
        ctx = _make_context(p, entry, mode, budget, cha, pts)
    gen = _Enumerator(ctx, entry).paths()
    try:
        yield from gen
    except _BudgetStop:
        return


def _make_context(p, entry, mode, budget, cha, pts) -> DetectionContext:
    budget = budget or AnalysisBudget()
    if mode in (Mode.NOPA, Mode.HYBRID) and cha is None:
        cha = build_cha_graph(p, entry)
    if mode in (Mode.PA, Mode.HYBRID) and pts is None:
        pts = solve(p, pa_entry_points(p))
    return DetectionContext(p, mode, budget, cha=cha, pts=pts)


def _scan_path(events: list[WriteEvent], ctx: DetectionContext, conflicts: dict) -> None:
    for i, w in enumerate(events):
        if w.provenance is Provenance.BASE:
            continue
        for j in range(i - 1, -1, -1):
            prior = events[j]
            if not same_element(prior, w, ctx.mode, ctx):
                continue
            # Most recent write to the same element decides: an opposite-side
            # write is overridden, a base write blocks, same side is benign.
            if prior.provenance is Provenance.BASE:
                break
            if prior.provenance is not w.provenance:
                c = Conflict(w.element_text(), overridden=prior, overriding=w)
                conflicts.setdefault(c.key, c)
            break


def detect(
    p: Program,
    entry: MethodDef,
    mode: Mode,
    budget: Optional[AnalysisBudget] = None,
    cha: Optional[CallGraph] = None,
    pts: Optional[PointsToResult] = None,
    early_exit: bool = False,
) -> AnalysisOutcome:
    """Run override-assignment detection from `entry` under `mode`."""
    if entry.id not in methods_by_id(p):
        raise MirError(f"entry '{entry.id}' not found in program")
    budget = budget or AnalysisBudget()
    ctx = _make_context(p, entry, mode, budget, cha, pts)
    conflicts: dict = {}
    started = time.perf_counter()
    stopped_early = False
    try:
        for path in _Enumerator(ctx, entry).paths():
            _scan_path(path, ctx, conflicts)
            if early_exit and conflicts:
                stopped_early = True
                break
    except _BudgetStop:
        pass

    if ctx.timed_out and not stopped_early:
        verdict = Verdict.TIMEOUT
    elif conflicts:
        verdict = Verdict.TRUE
    else:
        verdict = Verdict.FALSE

    ordered = sorted(
        conflicts.values(),
        key=lambda c: (
            c.overridden.root_pos,
            c.overriding.root_pos,
            c.overridden.pos,
            c.overriding.pos,
        ),
    )
    missrefs = [ctx.missrefs[k] for k in sorted(ctx.missrefs, key=lambda k: (k[0], k[1], k[2]))]
    elapsed = int(round((time.perf_counter() - started) * 1000)) if budget.wall_clock is not None else 0
    stats = OutcomeStats(visited=ctx.visited, paths=ctx.paths, elapsed_ms=elapsed)
    return AnalysisOutcome(verdict=verdict, conflicts=ordered, missrefs=missrefs, stats=stats)
