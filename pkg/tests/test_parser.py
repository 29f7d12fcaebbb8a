import pytest
import sympy as sp

from nsym.catalog import data_text, generator_to_dsl, spec_to_dsl, system_to_dsl
from nsym.expr import base_var, canonicalize, jet
from nsym.parser import ParseError, parse_document, parse_expression, parse_generator, parse_system
from nsym.printing import dsl_str

x = base_var("x")


def test_nls_system(nls):
    assert nls.axes == ("x", "t")
    assert nls.deps == ("q",)
    assert nls.is_complex
    q = jet("q", "xt")
    qbar_ref = jet("q", "xt", mask="x", conj=True)
    expected = sp.I * jet("q", "xt", "t") + jet("q", "xt", "x", "x") + 2 * q**2 * qbar_ref
    assert nls.equations["e1"] == canonicalize(expected)
    assert nls.leading["e1"].label() == "D[q,t]"


def test_mkdv_real(mkdv):
    assert mkdv.real_deps == frozenset({"u"})
    assert not mkdv.is_complex


def test_expression_functions():
    e = parse_expression("exp(2*x)*sech(x) + sqrt(4) + 3/2", ("x", "t"), ("q",))
    assert e == canonicalize(sp.exp(2 * x) * sp.sech(x) + 2 + sp.Rational(3, 2))


def test_reflection_arguments():
    e = parse_expression("conj(D[q,x]@(-x,t))")
    assert e == jet("q", "xt", "x", mask="x", conj=True)
    assert parse_expression("q@(-x,-t)") == jet("q", "xt", mask="xt")


def test_shift_argument():
    e = parse_expression("q@shift(x+i*pi,t)")
    assert e.coord.shift == (sp.I * sp.pi, 0)


def test_generator():
    g = parse_generator("gen s { xi_x: -x; xi_t: -2*t; phi_q: q; }")
    assert g.name == "s"
    assert g.xi["t"] == -2 * base_var("t")


@pytest.mark.parametrize("text,line,col", [
    ("vars x, t;\ndeps q;\neq e1: D[q,t] + ;\n", 3, 17),
    ("vars x, t;\ndeps q;\neq e1: q@(x,x) = 0;\n", 3, 13),
    ("vars x;\neq e: foo(x) = 0;\n", 2, 7),
    ("deps q;\n", 1, 1),
])
def test_parse_errors_have_spans(text, line, col):
    with pytest.raises(ParseError) as info:
        parse_document(text)
    assert (info.value.span.line, info.value.span.column) == (line, col)


def test_solve_needs_linear_leading():
    with pytest.raises(ParseError):
        parse_document("vars x, t;\ndeps q;\neq e: D[q,t]^2 + q = 0;\nsolve D[q,t] from e;\n")


def test_float_literal_is_exact():
    assert parse_expression("0.5*q") == canonicalize(sp.Rational(1, 2) * jet("q", "xt"))


@pytest.mark.parametrize("name", ["nls", "mkdv", "nls-real"])
def test_system_round_trip(name):
    sysm = parse_system(data_text(f"{name}.nsym"))
    again = parse_system(system_to_dsl(sysm))
    assert again.equations == sysm.equations
    assert again.leading == sysm.leading


def test_generator_round_trip(gens):
    for g in gens("nls"):
        text = "vars x, t;\ndeps q;\n" + generator_to_dsl(g)
        assert parse_document(text).generators[0].equals(g)


def test_spec_round_trip():
    from nsym.catalog import builtin_catalog
    for entry in builtin_catalog():
        doc = parse_document(spec_to_dsl(entry.spec, entry.system))
        assert doc.reductions[0] == entry.spec


def test_printer_round_trip_expression():
    e = parse_expression("i*D[q,t] + exp(-2*x)*(D[q,x,x] - D[q,x]) + 2*q^2*conj(q@shift(x+i*pi,t))")
    assert parse_expression(dsl_str(e)) == e
