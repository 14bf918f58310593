"""Core program model: a small class-based IR with merge provenance.

A Program holds classes and interfaces whose method bodies are structured
statement lists. Every statement carries a source position and a provenance
tag saying which side of a merge introduced it (BASE when unchanged). The
frontend builds Programs from source text; tests may build them by hand.
Once validated, a Program is treated as immutable by all analyses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, NamedTuple, Optional, Union


class MirError(Exception):
    pass


class ValidationError(MirError):
    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(str(d) for d in self.diagnostics)
        super().__init__(f"invalid program: {lines}")


class Provenance(Enum):
    BASE = "base"
    LEFT = "left"
    RIGHT = "right"


class Position(NamedTuple):
    file: str
    line: int

    def __str__(self) -> str:
        return f"{self.file}:{self.line}"


UNKNOWN_POS = Position("<builtin>", 0)


@dataclass(frozen=True)
class Const:
    """Literal operand (int or string), distinct from a local name."""

    value: Union[int, str]


# Operands are local names (str) or literals; array indexes are an int
# constant or a local name.
Operand = Union[str, Const]
IndexOperand = Union[int, str]


# ---------------------------------------------------------------------------
# Statements


@dataclass(kw_only=True)
class Stmt:
    pos: Position
    provenance: Provenance = Provenance.BASE


@dataclass(kw_only=True)
class AllocAssign(Stmt):
    """target = new cls(args); runs the matching constructor."""

    target: str
    cls: str
    args: tuple[Operand, ...] = ()


@dataclass(kw_only=True)
class ReflectiveAssign(Stmt):
    """target = mkref type; yields an instance with no allocation site."""

    target: str
    type: str


@dataclass(kw_only=True)
class CopyAssign(Stmt):
    target: str
    source: Operand


@dataclass(kw_only=True)
class FieldStore(Stmt):
    base: str
    field: str
    source: Operand


@dataclass(kw_only=True)
class FieldLoad(Stmt):
    target: str
    base: str
    field: str


@dataclass(kw_only=True)
class StaticStore(Stmt):
    cls: str
    field: str
    source: Operand


@dataclass(kw_only=True)
class StaticLoad(Stmt):
    target: str
    cls: str
    field: str


@dataclass(kw_only=True)
class ArrayAlloc(Stmt):
    target: str
    elem_type: str
    size: int


@dataclass(kw_only=True)
class ArrayStore(Stmt):
    base: str
    index: IndexOperand
    source: Operand


@dataclass(kw_only=True)
class ArrayLoad(Stmt):
    target: str
    base: str
    index: IndexOperand


@dataclass(kw_only=True)
class VirtualCall(Stmt):
    receiver: str
    method: str
    args: tuple[Operand, ...] = ()
    result: Optional[str] = None


@dataclass(kw_only=True)
class StaticCall(Stmt):
    cls: str
    method: str
    args: tuple[Operand, ...] = ()
    result: Optional[str] = None


@dataclass(kw_only=True)
class If(Stmt):
    cond: str
    then_body: list[Stmt] = field(default_factory=list)
    else_body: list[Stmt] = field(default_factory=list)


@dataclass(kw_only=True)
class While(Stmt):
    cond: str
    body: list[Stmt] = field(default_factory=list)


@dataclass(kw_only=True)
class Return(Stmt):
    value: Optional[str] = None


@dataclass(kw_only=True)
class OpaqueOp(Stmt):
    """target = op(operands); stands in for any arithmetic or logic."""

    target: str
    operands: tuple[Operand, ...] = ()


# ---------------------------------------------------------------------------
# Declarations


CTOR_NAME = "<init>"


@dataclass
class FieldDef:
    name: str
    type: str
    static: bool = False
    pos: Position = UNKNOWN_POS


@dataclass
class MethodDef:
    name: str
    params: tuple[str, ...]
    body: list[Stmt]
    declaring_class: str
    kind: str = "method"  # "method" | "constructor"
    static: bool = False
    public: bool = True
    pos: Position = UNKNOWN_POS

    @property
    def id(self) -> str:
        return f"{self.declaring_class}.{self.name}/{len(self.params)}"

    @property
    def display(self) -> str:
        return f"{self.declaring_class}.{self.name}()"

    @property
    def is_constructor(self) -> bool:
        return self.kind == "constructor"


@dataclass
class MethodSig:
    name: str
    params: tuple[str, ...]
    pos: Position = UNKNOWN_POS


@dataclass
class ClassDef:
    name: str
    superclass: Optional[str] = None
    interfaces: tuple[str, ...] = ()
    fields: list[FieldDef] = field(default_factory=list)
    methods: list[MethodDef] = field(default_factory=list)
    constructors: list[MethodDef] = field(default_factory=list)
    pos: Position = UNKNOWN_POS


@dataclass
class InterfaceDef:
    name: str
    extends: Optional[str] = None
    signatures: list[MethodSig] = field(default_factory=list)
    pos: Position = UNKNOWN_POS


@dataclass
class Program:
    classes: list[ClassDef] = field(default_factory=list)
    interfaces: list[InterfaceDef] = field(default_factory=list)

    def class_named(self, name: str) -> Optional[ClassDef]:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def interface_named(self, name: str) -> Optional[InterfaceDef]:
        for i in self.interfaces:
            if i.name == name:
                return i
        return None

    def declares_type(self, name: str) -> bool:
        return self.class_named(name) is not None or self.interface_named(name) is not None


@dataclass(frozen=True)
class Diagnostic:
    pos: Position
    message: str

    def __str__(self) -> str:
        return f"{self.pos}: {self.message}"


# ---------------------------------------------------------------------------
# Traversal helpers


def iter_stmts(body: list[Stmt]) -> Iterator[Stmt]:
    """All statements in a body, descending into structured blocks."""
    for st in body:
        yield st
        if isinstance(st, If):
            yield from iter_stmts(st.then_body)
            yield from iter_stmts(st.else_body)
        elif isinstance(st, While):
            yield from iter_stmts(st.body)


def all_methods(p: Program) -> Iterator[MethodDef]:
    """Methods and constructors in declaration order."""
    for c in p.classes:
        members = sorted(c.constructors + c.methods, key=lambda m: (m.pos.line, m.name))
        yield from members


def methods_by_id(p: Program) -> dict[str, MethodDef]:
    return {m.id: m for m in all_methods(p)}


def find_method(p: Program, ref: str) -> MethodDef:
    """Look up a method by 'Class.name' or 'Class.name/arity'."""
    arity = None
    if "/" in ref:
        ref, _, a = ref.partition("/")
        arity = int(a)
    cls_name, _, name = ref.partition(".")
    cls = p.class_named(cls_name)
    if cls is None:
        raise MirError(f"unknown class '{cls_name}'")
    matches = [
        m
        for m in cls.methods + cls.constructors
        if m.name == name and (arity is None or len(m.params) == arity)
    ]
    if not matches:
        raise MirError(f"no method '{name}' in class '{cls_name}'")
    if len(matches) > 1:
        raise MirError(f"ambiguous method '{ref}', give an arity as '{ref}/N'")
    return matches[0]


# ---------------------------------------------------------------------------
# Hierarchy queries


def _declared_supers(p: Program, name: str) -> list[str]:
    c = p.class_named(name)
    if c is not None:
        supers = []
        if c.superclass:
            supers.append(c.superclass)
        supers.extend(c.interfaces)
        return supers
    i = p.interface_named(name)
    if i is not None:
        return [i.extends] if i.extends else []
    raise MirError(f"unknown type '{name}'")


def supertypes_of(name: str, p: Program) -> set[str]:
    """Reflexive transitive supertypes (classes and interfaces)."""
    seen: set[str] = set()
    work = [name]
    while work:
        t = work.pop()
        if t in seen:
            continue
        seen.add(t)
        work.extend(s for s in _declared_supers(p, t) if p.declares_type(s))
    return seen


def subtype_of(sub: str, sup: str, p: Program) -> bool:
    """True iff sub == sup or sub transitively extends/implements sup."""
    if not p.declares_type(sub):
        raise MirError(f"unknown type '{sub}'")
    if not p.declares_type(sup):
        raise MirError(f"unknown type '{sup}'")
    return sup in supertypes_of(sub, p)


def implementers_of(t: str, p: Program) -> set[str]:
    """All concrete classes that are subtypes of t (interfaces excluded)."""
    if not p.declares_type(t):
        raise MirError(f"unknown type '{t}'")
    return {c.name for c in p.classes if t in supertypes_of(c.name, p)}


def lca_type(a: Optional[str], b: Optional[str], p: Program) -> Optional[str]:
    """Most specific common supertype of two declared types, if unique."""
    if a is None or b is None:
        return None
    if a == b:
        return a
    if not p.declares_type(a) or not p.declares_type(b):
        return None
    common = supertypes_of(a, p) & supertypes_of(b, p)
    if not common:
        return None
    minimal = [
        t
        for t in common
        if not any(s != t and t in supertypes_of(s, p) for s in common)
    ]
    if len(minimal) == 1:
        return minimal[0]
    return None


def resolve_field(p: Program, cls_name: Optional[str], fname: str):
    """Walk the class chain for an instance field; (declaring class, def) or None."""
    name = cls_name
    while name is not None:
        c = p.class_named(name)
        if c is None:
            break
        for f in c.fields:
            if f.name == fname and not f.static:
                return name, f
        name = c.superclass
    return None


def resolve_unique_field(p: Program, fname: str):
    """Fallback for untyped bases: the field, if exactly one class declares it."""
    found = [
        (c.name, f)
        for c in p.classes
        for f in c.fields
        if f.name == fname and not f.static
    ]
    if len(found) == 1:
        return found[0]
    return None


def resolve_static_field(p: Program, cls_name: str, fname: str):
    name = cls_name
    while name is not None:
        c = p.class_named(name)
        if c is None:
            break
        for f in c.fields:
            if f.name == fname and f.static:
                return name, f
        name = c.superclass
    return None


def resolve_method(p: Program, cls_name: str, mname: str, arity: int) -> Optional[MethodDef]:
    """Dynamic-dispatch lookup: the definition cls_name inherits for (mname, arity)."""
    name = cls_name
    while name is not None:
        c = p.class_named(name)
        if c is None:
            return None
        for m in c.methods:
            if m.name == mname and len(m.params) == arity and not m.static:
                return m
        name = c.superclass
    return None


def resolve_static_method(p: Program, cls_name: str, mname: str, arity: int) -> Optional[MethodDef]:
    name = cls_name
    while name is not None:
        c = p.class_named(name)
        if c is None:
            return None
        for m in c.methods:
            if m.name == mname and len(m.params) == arity and m.static:
                return m
        name = c.superclass
    return None


# ---------------------------------------------------------------------------
# Validation


def validate_program(p: Program) -> list[Diagnostic]:
    """Structural checks; an empty result means the program is well formed."""
    diags: list[Diagnostic] = []

    seen_types: dict[str, Position] = {}
    for decl in list(p.classes) + list(p.interfaces):
        if decl.name in seen_types:
            diags.append(Diagnostic(decl.pos, f"duplicate type name '{decl.name}'"))
        seen_types[decl.name] = decl.pos

    for c in p.classes:
        if c.superclass is not None:
            if not p.declares_type(c.superclass):
                diags.append(Diagnostic(c.pos, f"unknown supertype '{c.superclass}'"))
            elif p.class_named(c.superclass) is None:
                diags.append(
                    Diagnostic(c.pos, f"class '{c.name}' extends interface '{c.superclass}'")
                )
        for i in c.interfaces:
            if not p.declares_type(i):
                diags.append(Diagnostic(c.pos, f"unknown supertype '{i}'"))
            elif p.interface_named(i) is None:
                diags.append(Diagnostic(c.pos, f"class '{c.name}' implements class '{i}'"))
    for i in p.interfaces:
        if i.extends is not None:
            if not p.declares_type(i.extends):
                diags.append(Diagnostic(i.pos, f"unknown supertype '{i.extends}'"))
            elif p.interface_named(i.extends) is None:
                diags.append(
                    Diagnostic(i.pos, f"interface '{i.name}' extends class '{i.extends}'")
                )

    # Cycle detection over the declared-supertype graph, skipping unknown names.
    colors: dict[str, int] = {}

    def visit(name: str) -> bool:
        state = colors.get(name, 0)
        if state == 1:
            return True
        if state == 2:
            return False
        colors[name] = 1
        for s in _declared_supers(p, name):
            if p.declares_type(s) and visit(s):
                colors[name] = 2
                return True
        colors[name] = 2
        return False

    for decl in list(p.classes) + list(p.interfaces):
        if decl.name not in colors and visit(decl.name):
            diags.append(Diagnostic(decl.pos, f"inheritance cycle involving '{decl.name}'"))

    for c in p.classes:
        fnames: set[str] = set()
        for f in c.fields:
            if f.name in fnames:
                diags.append(Diagnostic(f.pos, f"duplicate field '{f.name}' in '{c.name}'"))
            fnames.add(f.name)
        sigs: set[tuple[str, int]] = set()
        for m in c.methods + c.constructors:
            key = (m.name, len(m.params))
            if key in sigs:
                diags.append(
                    Diagnostic(m.pos, f"duplicate method '{m.name}/{len(m.params)}' in '{c.name}'")
                )
            sigs.add(key)
            if m.declaring_class != c.name:
                diags.append(
                    Diagnostic(m.pos, f"method '{m.name}' declared in '{c.name}' but linked to '{m.declaring_class}'")
                )
            if len(set(m.params)) != len(m.params):
                diags.append(Diagnostic(m.pos, f"duplicate parameter in '{m.id}'"))

    positions: dict[Position, int] = {}
    for m in all_methods(p):
        for st in iter_stmts(m.body):
            positions[st.pos] = positions.get(st.pos, 0) + 1
    for pos, n in positions.items():
        if n > 1:
            diags.append(Diagnostic(pos, f"{n} statements share position {pos}"))

    return diags
