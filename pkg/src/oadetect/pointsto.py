"""Inclusion-based points-to analysis with an on-the-fly call graph.

Flow- and context-insensitive, field-sensitive, one smashed slot per array
allocation. Every `new`/`newarr` statement is an allocation site; reflective
instantiation (`mkref`) deliberately creates none, so anything it feeds keeps
an empty points-to set and shows up downstream as a miss-reference.

Constraint variables:
    ("l", method_id, local)   method-qualified local
    ("f", site_id, field)     instance field of an abstract object
    ("a", site_id)            the smashed slot of an abstract array
    ("s", cls, field)         static field (declaring class resolved)
    ("r", method_id)          return value

The solver starts from the program's entry points (all static `main`
methods, else every public method and constructor), discovers call edges as
receiver sets grow, and links parameters and returns along each edge.
Parameters of methods nobody calls stay empty: external callers are unknown.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Optional, Union

from .cha import CallEdge, CallGraph
from .mir import (
    AllocAssign,
    ArrayAlloc,
    ArrayLoad,
    ArrayStore,
    Const,
    CopyAssign,
    FieldLoad,
    FieldStore,
    MethodDef,
    MirError,
    Position,
    Program,
    Return,
    StaticCall,
    StaticLoad,
    StaticStore,
    VirtualCall,
    all_methods,
    iter_stmts,
    methods_by_id,
    resolve_method,
    resolve_static_field,
    resolve_static_method,
)


class _Miss:
    def __repr__(self) -> str:
        return "MISS"

    def __bool__(self) -> bool:
        return False


MISS = _Miss()

Var = tuple


@dataclass(frozen=True)
class AllocSite:
    id: int
    pos: Position
    cls: str
    kind: str  # "object" | "array"


@dataclass
class PointsToResult:
    pts: dict
    sites: tuple
    callgraph: CallGraph
    entries: tuple
    unresolved: tuple  # (Position, reason) pairs
    locals_by_method: dict
    entry_param_vars: frozenset

    def site(self, sid: int) -> AllocSite:
        return self.sites[sid]


def pa_entry_points(p: Program) -> list[MethodDef]:
    """All static `main` methods; else every public method and constructor."""
    mains = [m for m in all_methods(p) if m.static and m.name == "main"]
    if mains:
        return mains
    publics = [m for m in all_methods(p) if m.public or m.is_constructor]
    if not publics:
        raise MirError("no entry points")
    return publics


def _collect_alloc_sites(p: Program) -> dict[Position, AllocSite]:
    sites: dict[Position, AllocSite] = {}
    for m in all_methods(p):
        for st in iter_stmts(m.body):
            if isinstance(st, AllocAssign):
                sites[st.pos] = AllocSite(len(sites), st.pos, st.cls, "object")
            elif isinstance(st, ArrayAlloc):
                sites[st.pos] = AllocSite(len(sites), st.pos, st.elem_type, "array")
    return sites


def _collect_locals(p: Program) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for m in all_methods(p):
        names = set(m.params)
        if not m.static:
            names.add("this")
        for st in iter_stmts(m.body):
            for attr in ("target", "source", "base", "receiver", "cond", "value", "result"):
                v = getattr(st, attr, None)
                if isinstance(v, str):
                    names.add(v)
            for group in (getattr(st, "args", ()), getattr(st, "operands", ())):
                for a in group:
                    if isinstance(a, str):
                        names.add(a)
            idx = getattr(st, "index", None)
            if isinstance(idx, str):
                names.add(idx)
        out[m.id] = names
    return out


class _Solver:
    def __init__(self, p: Program, entries: list[MethodDef]):
        self.p = p
        self.entries = entries
        self.by_id = methods_by_id(p)
        self.sites_by_pos = _collect_alloc_sites(p)
        self.sites = sorted(self.sites_by_pos.values(), key=lambda s: s.id)
        self.pts: dict[Var, set[int]] = defaultdict(set)
        self.succ: dict[Var, set[Var]] = defaultdict(set)
        self.field_loads: dict[Var, set[tuple[str, Var]]] = defaultdict(set)
        self.field_stores: dict[Var, set[tuple[str, Var]]] = defaultdict(set)
        self.array_loads: dict[Var, set[Var]] = defaultdict(set)
        self.array_stores: dict[Var, set[Var]] = defaultdict(set)
        self.vcalls: dict[Var, list[tuple[str, VirtualCall]]] = defaultdict(list)
        self.dispatched: set[tuple[Position, int]] = set()
        self.edges: set[CallEdge] = set()
        self.reachable: set[str] = set()
        self.method_queue: deque[str] = deque()
        self.var_queue: deque[Var] = deque()
        self.var_queued: set[Var] = set()

    # -- constraint plumbing

    def local(self, mid: str, name: str) -> Var:
        return ("l", mid, name)

    def add_pts(self, var: Var, sids: set[int]) -> None:
        new = sids - self.pts[var]
        if new:
            self.pts[var] |= new
            if var not in self.var_queued:
                self.var_queue.append(var)
                self.var_queued.add(var)

    def add_copy(self, src: Var, dst: Var) -> None:
        if dst not in self.succ[src]:
            self.succ[src].add(dst)
            if self.pts[src]:
                self.add_pts(dst, self.pts[src])

    def operand_var(self, mid: str, o) -> Optional[Var]:
        if isinstance(o, Const):
            return None
        return self.local(mid, o)

    # -- method discovery

    def make_reachable(self, mid: str) -> None:
        if mid in self.reachable:
            return
        self.reachable.add(mid)
        self.method_queue.append(mid)

    def process_method(self, mid: str) -> None:
        method = self.by_id[mid]
        for st in iter_stmts(method.body):
            self.add_constraints(mid, st)

    def add_constraints(self, mid: str, st) -> None:
        if isinstance(st, AllocAssign):
            site = self.sites_by_pos[st.pos]
            self.add_pts(self.local(mid, st.target), {site.id})
            ctor = self._ctor_for(st.cls, len(st.args))
            if ctor is not None:
                self._bind_call(st.pos, mid, ctor, this_sites={site.id}, args=st.args, result=None)
        elif isinstance(st, ArrayAlloc):
            site = self.sites_by_pos[st.pos]
            self.add_pts(self.local(mid, st.target), {site.id})
        elif isinstance(st, CopyAssign):
            src = self.operand_var(mid, st.source)
            if src is not None:
                self.add_copy(src, self.local(mid, st.target))
        elif isinstance(st, FieldStore):
            src = self.operand_var(mid, st.source)
            if src is not None:
                base = self.local(mid, st.base)
                self.field_stores[base].add((st.field, src))
                self._apply_field_stores(base)
        elif isinstance(st, FieldLoad):
            base = self.local(mid, st.base)
            self.field_loads[base].add((st.field, self.local(mid, st.target)))
            self._apply_field_loads(base)
        elif isinstance(st, StaticStore):
            src = self.operand_var(mid, st.source)
            if src is not None:
                self.add_copy(src, self._static_var(st.cls, st.field))
        elif isinstance(st, StaticLoad):
            self.add_copy(self._static_var(st.cls, st.field), self.local(mid, st.target))
        elif isinstance(st, ArrayStore):
            src = self.operand_var(mid, st.source)
            if src is not None:
                base = self.local(mid, st.base)
                self.array_stores[base].add(src)
                self._apply_array_stores(base)
        elif isinstance(st, ArrayLoad):
            base = self.local(mid, st.base)
            self.array_loads[base].add(self.local(mid, st.target))
            self._apply_array_loads(base)
        elif isinstance(st, VirtualCall):
            recv = self.local(mid, st.receiver)
            self.vcalls[recv].append((mid, st))
            self._apply_calls(recv)
        elif isinstance(st, StaticCall):
            target = resolve_static_method(self.p, st.cls, st.method, len(st.args))
            if target is not None:
                self._bind_call(st.pos, mid, target, this_sites=None, args=st.args, result=st.result)
        elif isinstance(st, Return):
            if st.value is not None:
                self.add_copy(self.local(mid, st.value), ("r", mid))

    def _ctor_for(self, cls_name: str, arity: int):
        c = self.p.class_named(cls_name)
        if c is None:
            return None
        for ctor in c.constructors:
            if len(ctor.params) == arity:
                return ctor
        return None

    def _static_var(self, cls: str, fname: str) -> Var:
        hit = resolve_static_field(self.p, cls, fname)
        decl = hit[0] if hit is not None else cls
        return ("s", decl, fname)

    def _bind_call(self, pos, caller_mid, target: MethodDef, this_sites, args, result) -> None:
        self.edges.add(CallEdge(pos, caller_mid, target.id))
        self.make_reachable(target.id)
        if this_sites is not None and not target.static:
            self.add_pts(self.local(target.id, "this"), set(this_sites))
        for pname, a in zip(target.params, args):
            src = self.operand_var(caller_mid, a)
            if src is not None:
                self.add_copy(src, self.local(target.id, pname))
        if result is not None:
            self.add_copy(("r", target.id), self.local(caller_mid, result))

    # -- complex-constraint application

    def _object_sites(self, var: Var):
        return [s for s in self.pts[var] if self.sites[s].kind == "object"]

    def _array_sites(self, var: Var):
        return [s for s in self.pts[var] if self.sites[s].kind == "array"]

    def _apply_field_loads(self, base: Var) -> None:
        for fname, dst in self.field_loads[base]:
            for sid in self._object_sites(base):
                self.add_copy(("f", sid, fname), dst)

    def _apply_field_stores(self, base: Var) -> None:
        for fname, src in self.field_stores[base]:
            for sid in self._object_sites(base):
                self.add_copy(src, ("f", sid, fname))

    def _apply_array_loads(self, base: Var) -> None:
        for dst in self.array_loads[base]:
            for sid in self._array_sites(base):
                self.add_copy(("a", sid), dst)

    def _apply_array_stores(self, base: Var) -> None:
        for src in self.array_stores[base]:
            for sid in self._array_sites(base):
                self.add_copy(src, ("a", sid))

    def _apply_calls(self, recv: Var) -> None:
        for caller_mid, st in self.vcalls[recv]:
            for sid in self._object_sites(recv):
                if (st.pos, sid) in self.dispatched:
                    continue
                self.dispatched.add((st.pos, sid))
                target = resolve_method(self.p, self.sites[sid].cls, st.method, len(st.args))
                if target is None:
                    continue
                self._bind_call(st.pos, caller_mid, target, this_sites={sid}, args=st.args, result=st.result)

    # -- main loop

    def run(self) -> None:
        for m in self.entries:
            self.make_reachable(m.id)
        while self.method_queue or self.var_queue:
            while self.method_queue:
                self.process_method(self.method_queue.popleft())
            while self.var_queue:
                var = self.var_queue.popleft()
                self.var_queued.discard(var)
                for dst in list(self.succ[var]):
                    self.add_pts(dst, self.pts[var])
                self._apply_field_loads(var)
                self._apply_field_stores(var)
                self._apply_array_loads(var)
                self._apply_array_stores(var)
                self._apply_calls(var)


def solve(p: Program, entries: Optional[list[MethodDef]] = None) -> PointsToResult:
    """Least fixpoint of the inclusion constraints from the given entries."""
    if entries is None:
        entries = pa_entry_points(p)
    solver = _Solver(p, entries)
    solver.run()

    entry_ids = tuple(m.id for m in entries)
    graph = CallGraph(tag="pts", roots=set(entry_ids))
    graph.nodes = set(solver.reachable) | set(entry_ids)
    graph.edges = set(solver.edges)

    unresolved: list[tuple[Position, str]] = []
    by_id = methods_by_id(p)
    resolved_sites = {e.site for e in solver.edges}
    for mid in sorted(solver.reachable):
        for st in iter_stmts(by_id[mid].body):
            if isinstance(st, VirtualCall) and st.pos not in resolved_sites:
                unresolved.append((st.pos, "unresolved-call"))

    entry_params = set()
    for m in entries:
        for pname in m.params:
            entry_params.add(("l", m.id, pname))
        if not m.static:
            entry_params.add(("l", m.id, "this"))

    pts = {var: frozenset(sids) for var, sids in solver.pts.items() if sids}
    return PointsToResult(
        pts=pts,
        sites=tuple(solver.sites),
        callgraph=graph,
        entries=entry_ids,
        unresolved=tuple(sorted(unresolved)),
        locals_by_method=_collect_locals(p),
        entry_param_vars=frozenset(entry_params),
    )


def pts_of(r: PointsToResult, expr: Union[Var, tuple[str, str]]) -> "frozenset[int] | _Miss":
    """Points-to set of an expression; MISS when empty or never constrained.

    `expr` is either a full variable key or a (method_id, local) pair.
    """
    if len(expr) == 2 and expr[0] not in ("f", "a", "s", "r", "l"):
        mid, name = expr
        known = r.locals_by_method.get(mid)
        if known is None:
            raise MirError(f"unknown method '{mid}'")
        if name not in known:
            raise MirError(f"no local '{name}' in '{mid}'")
        expr = ("l", mid, name)
    got = r.pts.get(expr, frozenset())
    return got if got else MISS


def build_pa_graph(r: PointsToResult) -> CallGraph:
    """The on-the-fly call graph computed by solve, rooted at its entries."""
    return r.callgraph


def dump_pts(r: PointsToResult) -> str:
    """Debug dump: one `variable<TAB>{site ids}` line per non-empty set."""

    def render(var: Var) -> str:
        kind = var[0]
        if kind == "l":
            return f"{var[1]}::{var[2]}"
        if kind == "f":
            return f"site{var[1]}.{var[2]}"
        if kind == "a":
            return f"site{var[1]}[*]"
        if kind == "s":
            return f"{var[1]}::{var[2]}"
        return f"return:{var[1]}"

    lines = []
    for var in sorted(r.pts, key=render):
        sids = ", ".join(str(s) for s in sorted(r.pts[var]))
        lines.append(f"{render(var)}\t{{{sids}}}")
    if r.unresolved:
        lines.append("#MISS")
        for pos, reason in r.unresolved:
            lines.append(f"{pos.file}:{pos.line}\t{reason}")
    return "\n".join(lines) + ("\n" if lines else "")


def is_closed(p: Program, r: PointsToResult) -> bool:
    """Re-derive every constraint once and check nothing would grow."""
    fresh = solve(p, [m for m in all_methods(p) if m.id in r.entries])
    return fresh.pts == r.pts
