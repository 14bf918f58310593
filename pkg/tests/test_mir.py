from __future__ import annotations

import pytest

from oadetect.frontend import parse_source
from oadetect.mir import (
    MirError,
    implementers_of,
    subtype_of,
    validate_program,
)


TWO_CLASSES = """
class A {
  field x: int;
  method m() {
    y = op();
  }
}
class B extends A {
  method m() {
    z = op();
  }
}
"""


def test_validate_well_formed_program():
    p = parse_source(TWO_CLASSES)
    assert validate_program(p) == []


def test_validate_unknown_supertype():
    p = parse_source("class A extends Nope {\n}\n", validate=False)
    diags = validate_program(p)
    assert len(diags) == 1
    assert "unknown supertype" in diags[0].message


def test_validate_inheritance_cycle():
    p = parse_source("class A extends B {\n}\nclass B extends A {\n}\n", validate=False)
    messages = [d.message for d in validate_program(p)]
    assert any("inheritance cycle" in m for m in messages)


def test_validate_duplicate_field_and_method():
    p = parse_source(
        "class A {\n  field x: int;\n  field x: int;\n  method m() {\n  }\n  method m() {\n  }\n}\n",
        validate=False,
    )
    messages = [d.message for d in validate_program(p)]
    assert any("duplicate field" in m for m in messages)
    assert any("duplicate method" in m for m in messages)


def test_validate_duplicate_statement_position():
    p = parse_source("class A {\n  method m() {\n    x = 1; y = 2;\n  }\n}\n", validate=False)
    messages = [d.message for d in validate_program(p)]
    assert any("share position" in m for m in messages)


def test_validate_duplicate_params():
    p = parse_source("class A {\n  method m(a, a) {\n  }\n}\n", validate=False)
    messages = [d.message for d in validate_program(p)]
    assert any("duplicate parameter" in m for m in messages)


def test_validate_constructor_link():
    from oadetect.mir import ClassDef, CTOR_NAME, MethodDef, Program

    ctor = MethodDef(
        name=CTOR_NAME, params=(), body=[], declaring_class="B", kind="constructor"
    )
    p = Program(classes=[ClassDef(name="A", constructors=[ctor])])
    messages = [d.message for d in validate_program(p)]
    assert any("linked to 'B'" in m for m in messages)


def test_subtype_reflexive_and_interface(fig1_advanced):
    p, _ = fig1_advanced
    assert subtype_of("ReportSimple", "Report", p)
    assert subtype_of("Report", "Report", p)
    assert not subtype_of("ReportSimple", "ReportAdvanced", p)


def test_subtype_unknown_name_errors(fig1_advanced):
    p, _ = fig1_advanced
    with pytest.raises(MirError, match="Nope"):
        subtype_of("Nope", "Report", p)


def test_implementers(fig1_advanced):
    p, _ = fig1_advanced
    assert implementers_of("Report", p) == {"ReportSimple", "ReportAdvanced"}
    assert implementers_of("Main", p) == {"Main"}


def test_implementers_empty_interface():
    p = parse_source("interface I {\n  method m();\n}\nclass A {\n}\n")
    assert implementers_of("I", p) == set()


def test_implementers_matches_bruteforce(fig1_advanced):
    p, _ = fig1_advanced
    names = [c.name for c in p.classes] + [i.name for i in p.interfaces]
    for t in names:
        expected = {c.name for c in p.classes if subtype_of(c.name, t, p)}
        assert implementers_of(t, p) == expected


def test_subtype_transitive():
    p = parse_source(
        "interface I {\n  method m();\n}\n"
        "class A implements I {\n  method m() {\n  }\n}\n"
        "class B extends A {\n}\n"
    )
    assert subtype_of("B", "A", p)
    assert subtype_of("B", "I", p)
    assert not subtype_of("I", "B", p)
