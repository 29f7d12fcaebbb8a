"""Changes of variables turning reflections into shifts (differential-difference form).

Under ``x = exp(s X)`` the reflection ``x -> -x`` becomes ``X -> X + i pi / s``
because ``exp(i pi) = -1``.  Hats are dropped: the new variables keep the old
names.
"""
from __future__ import annotations

from dataclasses import replace
from typing import Mapping

import numpy as np
import sympy as sp

from nsym.expr import (
    Jet,
    JetCoordinate,
    StructuralError,
    base_var,
    canonicalize,
    conjugate,
    jets_in,
    total_derivative,
)
from nsym.reduction import ReducedODE
from nsym.system import EquationSystem


def _scales(axes, scale) -> dict[str, sp.Expr]:
    if scale is None:
        return {a: sp.S.One for a in axes}
    if not isinstance(scale, Mapping):
        return {a: sp.sympify(scale) for a in axes}
    out = {a: sp.sympify(scale.get(a, 1)) for a in axes}
    for a, s in out.items():
        if s == 0:
            raise ValueError(f"zero scale factor for {a}")
    return out


def _with_shift(c: JetCoordinate, add: dict[int, sp.Expr]) -> JetCoordinate:
    shift = list(c.shift) if c.shift is not None else [sp.S.Zero] * len(c.axes)
    for i, d in add.items():
        shift[i] = shift[i] + d
    return replace(c, shift=tuple(shift))


def _transform_system(system: EquationSystem, jet_value) -> EquationSystem:
    eqs = {}
    cache: dict = {}
    for name, F in system.equations.items():
        rep = {}
        for s in jets_in(F):
            if s not in cache:
                cache[s] = jet_value(s.coord)
            rep[s] = cache[s]
        eqs[name] = canonicalize(F.xreplace(rep))
    return EquationSystem(system.axes, system.deps, eqs, {}, system.real_deps)


def exp_substitute(system: EquationSystem, axes, scale=None) -> EquationSystem:
    """Substitute ``x = exp(s X)`` on ``axes``; reflections there become shifts by ``i pi / s``.

    ``scale`` defaults to 1 on every axis; a nonunit scale composes the
    exponential map with the rescaling in one step.
    """
    axes = list(axes)
    for a in axes:
        if a not in system.axes:
            raise StructuralError(f"{a!r} is not an independent variable")
    s = _scales(axes, scale)
    if any(v == 0 for v in s.values()):
        raise ValueError("zero scale factor")
    idx = {a: system.axes.index(a) for a in axes}

    def D(e, axis):
        if axis in s:
            return canonicalize(sp.exp(-s[axis] * base_var(axis)) / s[axis] * total_derivative(e, axis))
        return total_derivative(e, axis)

    def jet_value(c: JetCoordinate):
        if c.shift is not None:
            raise StructuralError(f"{c.label()} is already shifted")
        root = Jet(replace(c, orders=(0,) * len(c.axes), mask=frozenset(), conj=False))
        v = root
        for axis, o in zip(c.axes, c.orders):
            for _ in range(o):
                v = D(v, axis)
        moved = {idx[a]: sp.I * sp.pi / s[a] for a in axes if idx[a] in c.mask}
        if moved:
            v = v.xreplace({base_var(system.axes[i]): base_var(system.axes[i]) + d for i, d in moved.items()})
            v = v.xreplace({j: Jet(_with_shift(j.coord, moved)) for j in jets_in(v)})
        keep = c.mask - frozenset(moved)
        if keep:
            v = v.xreplace({j: Jet(j.coord.reflected(keep)) for j in jets_in(v)})
            v = v.xreplace({base_var(system.axes[i]): -base_var(system.axes[i]) for i in keep})
            v = v * (-1) ** sum(c.orders[i] for i in keep)
        if c.conj:
            v = conjugate(v)
        return canonicalize(v)

    return _transform_system(system, jet_value)


def rescale(system: EquationSystem, scale) -> EquationSystem:
    """Substitute ``X = s Y`` per axis: derivatives pick up ``1/s``, shifts are divided by ``s``."""
    s = _scales(system.axes, scale)
    for a, v in s.items():
        if v == 0:
            raise ValueError(f"zero scale factor for {a}")

    def jet_value(c: JetCoordinate):
        factor = sp.Mul(*[s[a] ** (-o) for a, o in zip(c.axes, c.orders)])
        if c.mask and any(s[c.axes[i]] != 1 and not (s[c.axes[i]].is_real) for i in c.mask):
            raise StructuralError("rescaling a reflected jet by a non-real factor")
        nc = c
        if c.shift is not None:
            nc = replace(c, shift=tuple(d / s[a] for a, d in zip(c.axes, c.shift)))
        return conjugate(factor) * Jet(nc) if c.conj else factor * Jet(nc)

    out = _transform_system(system, jet_value)
    eqs = {k: canonicalize(v.xreplace({base_var(a): s[a] * base_var(a) for a in system.axes}))
           for k, v in out.equations.items()}
    return EquationSystem(system.axes, system.deps, eqs, {}, system.real_deps)


def complex_affine_map(system: EquationSystem, scale) -> EquationSystem:
    """Substitute ``x = s X`` with ``s`` real or purely imaginary and ``X`` real.

    For imaginary ``s``, ``-x`` equals ``conj(x)``, so on conjugated jets the
    reflection mask on that axis is toggled: ``conj(q(-x))`` becomes the
    Schwarz conjugate of ``q`` at the same point.
    """
    s = _scales(system.axes, scale)
    kinds = {}
    for a, v in s.items():
        if v == 0:
            raise ValueError(f"zero scale factor for {a}")
        if v.is_real:
            kinds[a] = "real"
        elif (sp.re(v)) == 0:
            kinds[a] = "imaginary"
        else:
            raise ValueError(f"scale for {a} must be real or purely imaginary")

    def jet_value(c: JetCoordinate):
        if c.shift is not None:
            raise StructuralError("shifted jets are not supported by the affine map")
        # the conj family is read as the Schwarz conjugate, which is analytic,
        # so every jet picks up s^-J with no conjugation of s
        factor = sp.Mul(*[s[a] ** (-o) for a, o in zip(c.axes, c.orders)])
        nc = c
        if c.conj:
            flip = [i for i, a in enumerate(c.axes) if kinds[a] == "imaginary"]
            if flip:
                nc = c.reflected(flip)
        return factor * Jet(nc)

    out = _transform_system(system, jet_value)
    eqs = {k: canonicalize(v.xreplace({base_var(a): s[a] * base_var(a) for a in system.axes}))
           for k, v in out.equations.items()}
    return EquationSystem(system.axes, system.deps, eqs, {}, system.real_deps)


def has_reflections(system: EquationSystem) -> bool:
    return any(s.coord.mask for e in system.equations.values() for s in jets_in(e))


def strip_common_exp(e: sp.Expr, var: str, unit=1) -> tuple[sp.Expr, sp.Expr]:
    """Divide out the common ``exp(k unit var)``; returns (result, factor removed).

    Exponents must be rational multiples of ``unit``; the largest one is removed.
    """
    v = base_var(var)
    unit = sp.sympify(unit)
    ks = []
    for term in sp.Add.make_args(canonicalize(e)):
        k = sp.S.Zero
        for f in sp.Mul.make_args(term):
            if isinstance(f, sp.exp):
                k += sp.expand(f.args[0]).coeff(v)
        ks.append(sp.simplify(k / unit))
    if not ks or not all(k.is_Rational for k in ks):
        return canonicalize(e), sp.S.One
    kmax = max(ks)
    factor = sp.exp(kmax * unit * v)
    return canonicalize(e / factor), factor


def traveling_dde(ode: ReducedODE, scale=1) -> sp.Expr:
    """Exponential map on a one-variable nonlocal ODE, normalized by the common exponential."""
    if ode.order() < 1:
        raise StructuralError("unsupported ODE shape: no derivatives")
    for s in jets_in(ode.expr):
        if len(s.coord.axes) != 1:
            raise StructuralError("unsupported ODE shape: more than one independent variable")
    if not jets_in(ode.expr):
        raise StructuralError("unsupported ODE shape")
    sys1 = EquationSystem((ode.var,), (ode.dep,), {"ode": ode.expr}, {},
                          frozenset({ode.dep}) if ode.dep_real else frozenset())
    e = exp_substitute(sys1, [ode.var], {ode.var: scale}).equations["ode"]
    return strip_common_exp(e, ode.var, scale)[0]


# -- numeric conjugacy ----------------------------------------------------------------

class AnalyticField:
    """Numeric jets of analytic test functions, with Schwarz conjugates for ``conj``."""

    def __init__(self, axes, fields: dict[str, sp.Expr]):
        self.axes = tuple(axes)
        self.syms = [sp.Symbol(f"_{a}") for a in self.axes]
        self.fields = {d: f.xreplace({base_var(a): s for a, s in zip(self.axes, self.syms)})
                       for d, f in fields.items()}
        self._cache: dict = {}

    def _fn(self, dep, orders):
        key = (dep, orders)
        if key not in self._cache:
            f = self.fields[dep]
            for s, o in zip(self.syms, orders):
                if o:
                    f = sp.diff(f, s, o)
            self._cache[key] = sp.lambdify(self.syms, f, "numpy")
        return self._cache[key]

    def jet(self, c: JetCoordinate, point) -> complex:
        pt = [complex(v) for v in point]
        for i in c.mask:
            pt[i] = -pt[i]
        if c.shift is not None:
            pt = [p + complex(sp.N(d)) for p, d in zip(pt, c.shift)]
        f = self._fn(c.dep, c.orders)
        if c.conj:
            return complex(np.conj(f(*np.conj(pt))))
        return complex(f(*pt))


def evaluate(e: sp.Expr, axes, field: AnalyticField, point, params: dict | None = None) -> complex:
    e = sp.sympify(e)
    subs = {}
    for s in e.free_symbols:
        if isinstance(s, Jet):
            subs[s] = field.jet(s.coord, point)
        elif s.name in axes:
            subs[s] = complex(point[list(axes).index(s.name)])
        elif params and s.name in params:
            subs[s] = params[s.name]
        else:
            raise KeyError(f"no value for {s}")
    return complex(sp.N(e.xreplace(subs), 20))


def conjugacy_residual(source: sp.Expr, target: sp.Expr, axes, fields: dict[str, sp.Expr],
                       exp_axes, n: int = 64, seed: int = 0, params: dict | None = None,
                       jacobian=None, scale=None) -> float:
    """Max relative gap between the transformed residual and the source residual.

    The source field ``q(x)`` is pulled back to ``q_hat(X) = q(exp(s X))``;
    ``jacobian(X)`` is the known factor relating the two residuals.
    """
    rng = np.random.default_rng(seed)
    axes = tuple(axes)
    s = _scales(axes, scale)
    if not all(v.is_real for v in s.values()):
        # the conj family is not a pullback under a complex dilation
        raise ValueError("numeric conjugacy needs real scale factors")
    src_field = AnalyticField(axes, fields)
    X = {a: base_var(a) for a in axes}
    pulled = {d: f.xreplace({X[a]: sp.exp(s[a] * X[a]) for a in exp_axes}) for d, f in fields.items()}
    dst_field = AnalyticField(axes, pulled)
    worst = 0.0
    for _ in range(n):
        P = [complex(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)) for _ in axes]
        src_pt = [np.exp(complex(sp.N(s[a])) * p) if a in exp_axes else p for a, p in zip(axes, P)]
        r_src = evaluate(source, axes, src_field, src_pt, params)
        r_dst = evaluate(target, axes, dst_field, P, params)
        J = 1.0 if jacobian is None else complex(jacobian(*P))
        worst = max(worst, abs(r_dst - J * r_src) / (1 + abs(r_src) + abs(r_dst)))
    return worst


def proportionality(got: sp.Expr, expected: sp.Expr):
    """Constant ``c`` with ``got == c * expected``, or None."""
    g, e = canonicalize(got), canonicalize(expected)
    if g == 0 or e == 0:
        return sp.S.One if g == e else None
    ratio = sp.simplify(sp.cancel(sp.together(g / e)))
    if jets_in(ratio) or any(s.name in _axis_names(g, e) for s in ratio.free_symbols):
        return None
    if canonicalize(g - canonicalize(ratio * e)) != 0:
        return None
    return ratio


def _axis_names(*es) -> set[str]:
    return {a for e in es for s in jets_in(e) for a in s.coord.axes}
