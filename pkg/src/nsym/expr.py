"""Expression core: jet coordinates with reflections and conjugation.

Expressions are ordinary sympy expressions built from three kinds of atoms:

* base variables -- real ``sympy.Symbol`` objects named after the
  independent variables (``x``, ``t``, ...),
* parameters -- real symbols for every other identifier (``a``, ``c``, ``C1``),
* jets -- :class:`Jet` symbols wrapping a :class:`JetCoordinate`.

A jet ``u_J`` with reflection mask ``R`` stands for the derivative ``u_J``
evaluated at the point with the axes in ``R`` negated; a conjugated jet is
the complex conjugate of that value.  The four families ``q``, ``conj q``,
``q@(-x,t)`` and ``conj q@(-x,t)`` are algebraically independent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping

import numpy as np
import sympy as sp


class StructuralError(ValueError):
    """Raised for expressions outside the supported canonical class."""


class UnboundSymbolError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"no value assigned to {self.name!r}"


@dataclass(frozen=True)
class JetCoordinate:
    """Formal coordinate ``u^alpha_J`` on (reflected, conjugated) jet space."""

    dep: str
    axes: tuple[str, ...]
    orders: tuple[int, ...]
    mask: frozenset[int] = frozenset()
    conj: bool = False
    real: bool = False
    shift: tuple | None = None

    def __post_init__(self):
        if len(self.orders) != len(self.axes):
            raise StructuralError("multi-index length does not match axes")
        if any(o < 0 for o in self.orders):
            raise StructuralError("negative derivative order")
        if self.real and self.conj:
            object.__setattr__(self, "conj", False)
        if self.shift is not None:
            shift = tuple(sp.sympify(s) for s in self.shift)
            object.__setattr__(self, "shift", None if all(s == 0 for s in shift) else shift)

    @property
    def order(self) -> int:
        return sum(self.orders)

    @property
    def is_base(self) -> bool:
        return not self.mask and not self.conj and self.shift is None

    def base(self) -> JetCoordinate:
        return replace(self, mask=frozenset(), conj=False, shift=None)

    def root(self) -> JetCoordinate:
        """The order-zero, unreflected, unconjugated coordinate of this family."""
        return replace(self, orders=(0,) * len(self.axes), mask=frozenset(), conj=False, shift=None)

    def family(self) -> tuple[frozenset[int], bool]:
        return self.mask, self.conj

    def derived(self, axis: int, times: int = 1) -> JetCoordinate:
        orders = list(self.orders)
        orders[axis] += times
        return replace(self, orders=tuple(orders))

    def with_orders(self, orders: Iterable[int]) -> JetCoordinate:
        return replace(self, orders=tuple(orders))

    def reflected(self, axes: Iterable[int]) -> JetCoordinate:
        return replace(self, mask=self.mask ^ frozenset(axes))

    def conjugated(self) -> JetCoordinate:
        if self.real:
            return self
        return replace(self, conj=not self.conj)

    def label(self) -> str:
        """DSL text for this coordinate, e.g. ``conj(D[q,x,x]@(-x,t))``."""
        if self.order:
            ds = ",".join(a for a, o in zip(self.axes, self.orders) for _ in range(o))
            s = f"D[{self.dep},{ds}]"
        else:
            s = self.dep
        if self.mask:
            args = ",".join(("-" if i in self.mask else "") + a for i, a in enumerate(self.axes))
            s += f"@({args})"
        if self.shift is not None:
            args = ",".join(
                a if d == 0 else _shift_text(a, d) for a, d in zip(self.axes, self.shift)
            )
            s += f"@shift({args})"
        if self.conj:
            s = f"conj({s})"
        return s

    def symbol(self) -> Jet:
        return Jet(self)


def _shift_text(axis: str, d) -> str:
    from nsym.printing import dsl_str

    text = dsl_str(d)
    if text.startswith("-"):
        return f"{axis}{text}"
    return f"{axis}+{text}"


class Jet(sp.Symbol):
    """A sympy symbol carrying a :class:`JetCoordinate`."""

    def __new__(cls, coord: JetCoordinate):
        key = coord.label() + "|" + ",".join(coord.axes) + ("|r" if coord.real else "")
        obj = super().__new__(cls, key)
        obj.coord = coord
        return obj

    def __getnewargs__(self):
        return (self.coord,)

    def __reduce_ex__(self, protocol):
        return (Jet, (self.coord,))


def base_var(name: str) -> sp.Symbol:
    return sp.Symbol(name, real=True)


def param(name: str) -> sp.Symbol:
    return sp.Symbol(name, real=True)


def jet(dep: str, axes: Iterable[str], *diff: str, mask: Iterable[str] = (), conj: bool = False,
        real: bool = False) -> Jet:
    """Build a jet symbol, e.g. ``jet("q", "xt", "x", "x", mask="x", conj=True)``."""
    axes = tuple(axes)
    orders = tuple(diff.count(a) for a in axes)
    if len(diff) != sum(orders):
        raise StructuralError(f"unknown axis in {diff!r}")
    m = frozenset(axes.index(a) for a in mask)
    return Jet(JetCoordinate(dep, axes, orders, m, conj, real))


def jets_in(e: sp.Expr) -> set[Jet]:
    return {s for s in sp.sympify(e).free_symbols if isinstance(s, Jet)}


def base_vars_in(e: sp.Expr, axes: Iterable[str]) -> set[sp.Symbol]:
    names = set(axes)
    return {s for s in sp.sympify(e).free_symbols if not isinstance(s, Jet) and s.name in names}


def _check_structure(e: sp.Expr) -> None:
    for node in sp.preorder_traversal(e):
        if isinstance(node, sp.Float):
            raise StructuralError(f"floating-point constant {node} in symbolic expression")
        if (
            isinstance(node, sp.Pow)
            and isinstance(node.base, sp.Add)
            and not node.exp.is_integer
            and jets_in(node.base)
        ):
            raise StructuralError(f"non-integer power of a sum over jets: {node}")


def canonicalize(e) -> sp.Expr:
    """Expanded normal form with exponentials of products merged.

    Idempotent.  Polynomials in jets are fully expanded; ``exp(a)*exp(b)``
    collapses to ``exp(a+b)``.
    """
    e = sp.sympify(e)
    _check_structure(e)
    e = sp.expand(e, power_exp=False, log=False)
    e = sp.powsimp(e, combine="exp", deep=True)
    return sp.expand(e, power_exp=False, log=False)


def is_zero(e) -> bool:
    return canonicalize(e) == 0


def _axis_index(coord: JetCoordinate, axis: str) -> int | None:
    try:
        return coord.axes.index(axis)
    except ValueError:
        return None


def jet_derivative(s: Jet, axis: str) -> sp.Expr:
    """``D_axis`` of a single jet, with the chain-rule sign through reflections."""
    c = s.coord
    i = _axis_index(c, axis)
    if i is None:
        return sp.S.Zero
    d = Jet(c.derived(i))
    return -d if i in c.mask else d


def total_derivative(e, axis: str, explicit: bool = True) -> sp.Expr:
    """Total derivative ``D_axis``; ``explicit=False`` drops the partial in the base variable."""
    e = sp.sympify(e)
    out = sp.diff(e, base_var(axis)) if explicit else sp.S.Zero
    for s in sorted(jets_in(e), key=sp.default_sort_key):
        ds = jet_derivative(s, axis)
        if ds != 0:
            out += sp.diff(e, s) * ds
    return canonicalize(out)


def total_derivative_multi(e, axes: Iterable[str]) -> sp.Expr:
    for a in axes:
        e = total_derivative(e, a)
    return e


def reflect(e, axes: Iterable[str]) -> sp.Expr:
    """Compose ``e`` with the reflection negating ``axes``."""
    e = sp.sympify(e)
    axes = set(axes)
    if not axes:
        return e
    rep: dict = {}
    for s in e.free_symbols:
        if isinstance(s, Jet):
            idx = [i for i, a in enumerate(s.coord.axes) if a in axes]
            if idx:
                rep[s] = Jet(s.coord.reflected(idx))
        elif s.name in axes:
            rep[s] = -s
    return e.xreplace(rep)


def conjugate(e) -> sp.Expr:
    """Formal complex conjugate: ``i -> -i`` and conjugation flags toggled on jets.

    Base variables and parameters are real; function arguments are assumed to
    lie in the chart where the function is real-analytic.
    """
    e = sp.sympify(e)
    rep: dict = {sp.I: -sp.I}
    for s in jets_in(e):
        rep[s] = Jet(s.coord.conjugated())
    return e.xreplace(rep)


def _binding_key(k):
    if isinstance(k, Jet):
        return k
    if isinstance(k, JetCoordinate):
        return Jet(k)
    if isinstance(k, str):
        return param(k)
    return k


def _check_acyclic(bindings: Mapping) -> None:
    keys = set(bindings)
    graph = {k: {s for s in sp.sympify(v).free_symbols if s in keys} for k, v in bindings.items()}
    state: dict = {}

    def visit(k, path):
        st = state.get(k)
        if st == 1:
            raise StructuralError("cyclic substitution: " + " -> ".join(str(p) for p in path + [k]))
        if st == 2:
            return
        state[k] = 1
        for n in graph[k]:
            if n == k and bindings[k] == k:
                continue
            visit(n, path + [k])
        state[k] = 2

    for k in graph:
        visit(k, [])


def substitute(e, bindings: Mapping, derivation: Callable[[sp.Expr, str], sp.Expr] | None = None
               ) -> sp.Expr:
    """Simultaneous substitution followed by canonicalization.

    A binding on an unreflected, unconjugated jet also covers its reflected
    and conjugated copies: the bound expression is reflected/conjugated
    accordingly.  With ``derivation`` given, a binding on an order-zero jet
    also covers all its derivatives, ``derivation(expr, axis)`` being the
    total derivative in the new coordinates.
    """
    e = sp.sympify(e)
    bindings = {_binding_key(k): sp.sympify(v) for k, v in bindings.items()}
    _check_acyclic(bindings)
    rep: dict = {}
    for s in e.free_symbols:
        if s in bindings:
            rep[s] = bindings[s]
            continue
        if not isinstance(s, Jet):
            continue
        c = s.coord
        value = bindings.get(Jet(c.base()))
        if value is None and derivation is not None:
            value = bindings.get(Jet(c.root()))
            if value is not None:
                for axis, o in zip(c.axes, c.orders):
                    for _ in range(o):
                        value = derivation(value, axis)
        if value is None:
            continue
        if c.mask:
            value = reflect(value, [c.axes[i] for i in c.mask])
        if c.conj:
            value = conjugate(value)
        rep[s] = value
    return canonicalize(e.xreplace(rep))


# -- numeric evaluation -------------------------------------------------------

def _sech(z):
    return 1 / np.cosh(z)


def _numeric_modules():
    from nsym import elliptic

    return [
        {
            "sech": _sech,
            "sn": elliptic.sn_vec,
            "cn": elliptic.cn_vec,
            "dn": elliptic.dn_vec,
            "Abs": np.abs,
            "conjugate": np.conj,
        },
        "numpy",
    ]


def compile_numeric(e, symbols: Iterable[sp.Symbol]) -> Callable:
    """Vectorised complex evaluator of ``e`` as a function of ``symbols``."""
    symbols = list(symbols)
    # fixed argument names keep the generated code (and float rounding) stable
    plain = [sp.Symbol(f"_a{k}") for k in range(len(symbols))]
    e = sp.sympify(e).xreplace(dict(zip(symbols, plain)))
    return sp.lambdify(plain, e, modules=_numeric_modules())


def _lookup(assignment: Mapping, s: sp.Symbol):
    if s in assignment:
        return assignment[s]
    name = s.coord.label() if isinstance(s, Jet) else s.name
    if name in assignment:
        return assignment[name]
    raise UnboundSymbolError(name)


def eval_numeric(e, assignment: Mapping) -> complex:
    """Evaluate ``e`` at one point; keys are symbols or their DSL labels."""
    e = sp.sympify(e)
    syms = sorted(e.free_symbols, key=sp.default_sort_key)
    values = [complex(_lookup(assignment, s)) for s in syms]
    f = compile_numeric(e, syms)
    with np.errstate(all="ignore"):
        v = complex(f(*[np.complex128(v) for v in values]))
    if not (math.isfinite(v.real) and math.isfinite(v.imag)):
        raise ZeroDivisionError(f"non-finite value {v} evaluating {e}")
    return v


def random_complex(rng: np.random.Generator, scale: float = 1.0) -> complex:
    return complex(rng.normal(scale=scale), rng.normal(scale=scale))


__all__ = [
    "Jet",
    "JetCoordinate",
    "StructuralError",
    "UnboundSymbolError",
    "base_var",
    "canonicalize",
    "compile_numeric",
    "conjugate",
    "eval_numeric",
    "is_zero",
    "jet",
    "jet_derivative",
    "jets_in",
    "param",
    "reflect",
    "substitute",
    "total_derivative",
]
