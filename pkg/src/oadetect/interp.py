"""Concrete interpreter used as an oracle for the static analyses.

Runs a program from a `main` method with a real heap of objects tagged by
their allocation sites, recording three things the analyses make claims
about: which locals held which allocation sites, which targets virtual
calls actually dispatched to, and the ordered write events with concrete
element identities and merge provenance. Opaque operations compute a
deterministic hash so runs are reproducible; execution halts cleanly at a
step limit, leaving a partial trace. Reflective instantiation has no
concrete semantics here and is rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .mir import (
    AllocAssign,
    ArrayAlloc,
    ArrayLoad,
    ArrayStore,
    Const,
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
    resolve_method,
    resolve_static_field,
    resolve_static_method,
)

_MAX_CALL_DEPTH = 64


class OracleError(MirError):
    pass


class _Halt(Exception):
    def __init__(self, reason: str):
        self.reason = reason


class _ReturnSignal(Exception):
    def __init__(self, value):
        self.value = value


@dataclass
class Obj:
    oid: int
    site_id: int
    cls: str
    fields: dict = field(default_factory=dict)


@dataclass
class Arr:
    oid: int
    site_id: int
    slots: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TraceWrite:
    kind: str  # LV | IFR | AR | SFR
    key: tuple
    pos: Position
    provenance: Provenance


@dataclass
class Trace:
    bindings: list = field(default_factory=list)  # (method_id, local, site_id)
    dispatches: list = field(default_factory=list)  # (Position, target method_id)
    writes: list = field(default_factory=list)  # TraceWrite
    steps: int = 0
    halted: bool = False
    halt_reason: str = ""


class _Interp:
    def __init__(self, p: Program, step_limit: int):
        self.p = p
        self.step_limit = step_limit
        self.trace = Trace()
        self.statics: dict = {}
        self.next_oid = 0
        self.site_ids = self._number_sites()

    def _number_sites(self) -> dict[Position, int]:
        # Matches the solver's dense numbering: allocation statements in
        # declaration order.
        from .pointsto import _collect_alloc_sites

        return {pos: site.id for pos, site in _collect_alloc_sites(self.p).items()}

    def run(self, main: MethodDef) -> Trace:
        for st_check in _all_stmts(self.p):
            if isinstance(st_check, ReflectiveAssign):
                raise OracleError("oracle cannot execute reflective instantiation")
        try:
            self._invoke(main, [], None, Provenance.BASE, depth=0)
        except _Halt as h:
            self.trace.halted = True
            self.trace.halt_reason = h.reason
        return self.trace

    # -- frames and values

    def _invoke(self, method: MethodDef, args, this, prov: Provenance, depth: int):
        if depth > _MAX_CALL_DEPTH:
            raise _Halt("call depth limit")
        frame: dict = {}
        mid = method.id
        for name, value in zip(method.params, args):
            frame[name] = value
            self._note_binding(mid, name, value)
        if not method.static and this is not None:
            frame["this"] = this
            self._note_binding(mid, "this", this)
        try:
            self._exec_block(method.body, frame, method, prov, depth)
        except _ReturnSignal as r:
            return r.value
        return None

    def _note_binding(self, mid: str, local: str, value) -> None:
        if isinstance(value, (Obj, Arr)):
            self.trace.bindings.append((mid, local, value.site_id))

    def _tick(self) -> None:
        self.trace.steps += 1
        if self.trace.steps > self.step_limit:
            raise _Halt("step limit")

    def _operand(self, o, frame):
        if isinstance(o, Const):
            return o.value
        return frame.get(o)

    def _truthy(self, v) -> bool:
        if isinstance(v, int):
            return v != 0
        if isinstance(v, str):
            return bool(v)
        return v is not None

    def _hash(self, values) -> int:
        acc = 17
        for v in values:
            if isinstance(v, int):
                x = v
            elif isinstance(v, str):
                x = len(v)
            elif isinstance(v, (Obj, Arr)):
                x = v.site_id + 1
            else:
                x = 0
            acc = (acc * 31 + x + 7) % 1021
        return acc

    def _assign(self, frame, mid, st, name, value, prov) -> None:
        frame[name] = value
        self._note_binding(mid, name, value)
        self.trace.writes.append(TraceWrite("LV", (mid, name), st.pos, prov))

    def _prov(self, st, inherited: Provenance) -> Provenance:
        return st.provenance if st.provenance is not Provenance.BASE else inherited

    # -- execution

    def _exec_block(self, body, frame, method, inherited, depth):
        for st in body:
            self._tick()
            prov = self._prov(st, inherited)
            self._exec_stmt(st, frame, method, inherited, prov, depth)

    def _exec_stmt(self, st, frame, method, inherited, prov, depth):
        mid = method.id
        if isinstance(st, If):
            branch = st.then_body if self._truthy(frame.get(st.cond)) else st.else_body
            self._exec_block(branch, frame, method, inherited, depth)
            return None
        if isinstance(st, While):
            while self._truthy(frame.get(st.cond)):
                self._tick()
                self._exec_block(st.body, frame, method, inherited, depth)
            return None
        if isinstance(st, Return):
            raise _ReturnSignal(frame.get(st.value) if st.value else None)
        if isinstance(st, AllocAssign):
            obj = Obj(self.next_oid, self.site_ids[st.pos], st.cls)
            self.next_oid += 1
            self._assign(frame, mid, st, st.target, obj, prov)
            ctor = self._ctor_for(st.cls, len(st.args))
            if ctor is not None:
                args = [self._operand(a, frame) for a in st.args]
                self._call(ctor, args, obj, st, prov, depth)
            return None
        if isinstance(st, ArrayAlloc):
            arr = Arr(self.next_oid, self.site_ids[st.pos])
            self.next_oid += 1
            self._assign(frame, mid, st, st.target, arr, prov)
            return None
        if isinstance(st, CopyAssign):
            self._assign(frame, mid, st, st.target, self._operand(st.source, frame), prov)
            return None
        if isinstance(st, OpaqueOp):
            value = self._hash(self._operand(o, frame) for o in st.operands)
            self._assign(frame, mid, st, st.target, value, prov)
            return None
        if isinstance(st, FieldStore):
            obj = frame.get(st.base)
            if not isinstance(obj, Obj):
                raise _Halt(f"field store on non-object at {st.pos}")
            obj.fields[st.field] = self._operand(st.source, frame)
            self.trace.writes.append(TraceWrite("IFR", (obj.oid, st.field), st.pos, prov))
            return None
        if isinstance(st, FieldLoad):
            obj = frame.get(st.base)
            if not isinstance(obj, Obj):
                raise _Halt(f"field load on non-object at {st.pos}")
            self._assign(frame, mid, st, st.target, obj.fields.get(st.field, 0), prov)
            return None
        if isinstance(st, StaticStore):
            hit = resolve_static_field(self.p, st.cls, st.field)
            decl = hit[0] if hit else st.cls
            self.statics[(decl, st.field)] = self._operand(st.source, frame)
            self.trace.writes.append(TraceWrite("SFR", (decl, st.field), st.pos, prov))
            return None
        if isinstance(st, StaticLoad):
            hit = resolve_static_field(self.p, st.cls, st.field)
            decl = hit[0] if hit else st.cls
            self._assign(frame, mid, st, st.target, self.statics.get((decl, st.field), 0), prov)
            return None
        if isinstance(st, ArrayStore):
            arr = frame.get(st.base)
            if not isinstance(arr, Arr):
                raise _Halt(f"array store on non-array at {st.pos}")
            idx = st.index if isinstance(st.index, int) else frame.get(st.index)
            if not isinstance(idx, int):
                raise _Halt(f"non-integer array index at {st.pos}")
            arr.slots[idx] = self._operand(st.source, frame)
            self.trace.writes.append(TraceWrite("AR", (arr.oid, idx), st.pos, prov))
            return None
        if isinstance(st, ArrayLoad):
            arr = frame.get(st.base)
            if not isinstance(arr, Arr):
                raise _Halt(f"array load on non-array at {st.pos}")
            idx = st.index if isinstance(st.index, int) else frame.get(st.index)
            self._assign(frame, mid, st, st.target, arr.slots.get(idx, 0), prov)
            return None
        if isinstance(st, VirtualCall):
            recv = frame.get(st.receiver)
            if not isinstance(recv, Obj):
                raise _Halt(f"virtual call on non-object at {st.pos}")
            target = resolve_method(self.p, recv.cls, st.method, len(st.args))
            if target is None:
                raise _Halt(f"no method '{st.method}/{len(st.args)}' on {recv.cls} at {st.pos}")
            self.trace.dispatches.append((st.pos, target.id))
            args = [self._operand(a, frame) for a in st.args]
            ret = self._call(target, args, recv, st, prov, depth)
            if st.result is not None:
                self._assign(frame, mid, st, st.result, ret, prov)
            return None
        if isinstance(st, StaticCall):
            target = resolve_static_method(self.p, st.cls, st.method, len(st.args))
            if target is None:
                raise _Halt(f"no static method '{st.cls}::{st.method}' at {st.pos}")
            args = [self._operand(a, frame) for a in st.args]
            ret = self._call(target, args, None, st, prov, depth)
            if st.result is not None:
                self._assign(frame, mid, st, st.result, ret, prov)
            return None
        raise OracleError(f"cannot execute {st!r}")

    def _call(self, target, args, this, site_st, site_prov, depth):
        return self._invoke(target, args, this, site_prov, depth + 1)

    def _ctor_for(self, cls_name: str, arity: int) -> Optional[MethodDef]:
        c = self.p.class_named(cls_name)
        if c is None:
            return None
        for ctor in c.constructors:
            if len(ctor.params) == arity:
                return ctor
        return None


def _all_stmts(p: Program):
    from .mir import all_methods, iter_stmts

    for m in all_methods(p):
        yield from iter_stmts(m.body)


def interpret(p: Program, main: MethodDef, step_limit: int = 10_000) -> Trace:
    """Execute `main` concretely; raises OracleError on reflective code."""
    return _Interp(p, step_limit).run(main)
