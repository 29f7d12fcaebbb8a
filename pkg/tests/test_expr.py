import pytest
import sympy as sp

from nsym.expr import (
    Jet,
    StructuralError,
    UnboundSymbolError,
    base_var,
    canonicalize,
    conjugate,
    eval_numeric,
    jet,
    jets_in,
    reflect,
    substitute,
    total_derivative,
)

x, t = base_var("x"), base_var("t")
q = jet("q", "xt")
qx = jet("q", "xt", "x")
qxx = jet("q", "xt", "x", "x")
qxt = jet("q", "xt", "x", "t")


def test_jet_labels():
    assert q.coord.label() == "q"
    assert qxt.coord.label() == "D[q,x,t]"
    assert jet("q", "xt", "x", mask="x", conj=True).coord.label() == "conj(D[q,x]@(-x,t))"


def test_real_dep_ignores_conj():
    u = jet("u", "xt", real=True)
    assert conjugate(u) == u


def test_unknown_axis():
    with pytest.raises(StructuralError):
        jet("q", "xt", "y")


def test_total_derivative_explicit_and_chain():
    e = x**2 * q * qx
    assert total_derivative(e, "x") == canonicalize(2 * x * q * qx + x**2 * qx**2 + x**2 * q * qxx)
    assert total_derivative(e, "x", explicit=False) == canonicalize(x**2 * qx**2 + x**2 * q * qxx)


def test_total_derivative_reflected_sign():
    # d/dx q(-x,t) = -q_x(-x,t)
    r = jet("q", "xt", mask="x")
    assert total_derivative(r, "x") == -jet("q", "xt", "x", mask="x")
    assert total_derivative(r, "t") == jet("q", "xt", "t", mask="x")


def test_derivatives_commute():
    e = x * t * q**2 + sp.exp(2 * x) * jet("q", "xt", mask="x", conj=True)
    assert total_derivative(total_derivative(e, "x"), "t") == total_derivative(total_derivative(e, "t"), "x")


def test_reflect_example():
    # reflect(x q_x, {x}) -> -x * q_x@(-x,t)
    assert reflect(x * qx, ["x"]) == -x * jet("q", "xt", "x", mask="x")


def test_reflect_conjugate_involutions():
    e = sp.I * x * q**2 * jet("q", "xt", mask="x", conj=True) + t
    assert reflect(reflect(e, ["x"]), ["x"]) == e
    assert conjugate(conjugate(e)) == e
    assert reflect(conjugate(e), ["x"]) == conjugate(reflect(e, ["x"]))


def test_canonicalize_merges_exponentials():
    e = sp.exp(x) * sp.exp(-3 * x) * (q + 1)
    c = canonicalize(e)
    assert c == canonicalize(sp.exp(-2 * x) * q + sp.exp(-2 * x))
    assert canonicalize(c) == c


def test_canonicalize_rejects_floats():
    with pytest.raises(StructuralError):
        canonicalize(sp.Float(0.5) * q)


def test_substitute_covers_reflected_and_conjugated_copies():
    e = q + jet("q", "xt", mask="x", conj=True)
    out = substitute(e, {q: sp.I * x})
    # conj(i * (-x)) = i x
    assert out == canonicalize(2 * sp.I * x)


def test_substitute_with_derivation():
    out = substitute(qxx, {q: x**3}, derivation=lambda e, a: total_derivative(e, a))
    assert out == 6 * x


def test_substitute_cycle():
    a, b = sp.Symbol("a", real=True), sp.Symbol("b", real=True)
    with pytest.raises(StructuralError):
        substitute(a + b, {a: b, b: a})


def test_eval_numeric_by_label():
    e = q * qx + x
    v = eval_numeric(e, {"q": 2, "D[q,x]": 1j, "x": 0.5})
    assert v == pytest.approx(0.5 + 2j)
    with pytest.raises(UnboundSymbolError):
        eval_numeric(e, {"q": 1})


def test_eval_numeric_nonfinite():
    with pytest.raises(ZeroDivisionError):
        eval_numeric(1 / x, {"x": 0.0})


def test_jets_in():
    e = q * qx + x
    assert jets_in(e) == {q, qx}
    assert all(isinstance(s, Jet) for s in jets_in(e))


def test_shift_normalization():
    from dataclasses import replace
    c = replace(q.coord, shift=(0, 0))
    assert c.shift is None
    s = replace(q.coord, shift=(sp.I * sp.pi, 0))
    assert Jet(s).coord.label() == "q@shift(x+i*pi,t)"
