"""Symmetry reductions of nonlocal systems to ODEs, driven by declared invariants."""
from __future__ import annotations

from dataclasses import dataclass, field

import sympy as sp

from nsym.expr import (
    Jet,
    JetCoordinate,
    StructuralError,
    base_var,
    canonicalize,
    conjugate,
    jets_in,
    param,
    total_derivative,
)
from nsym.system import EquationSystem

PARITIES = ("even", "odd", "fixed")


class ReductionFailure(StructuralError):
    """The declared invariants do not reduce the system."""


@dataclass
class Stage:
    """Post-processing step: ``integrate`` (arg = constant name) or ``change`` (arg = (z, y(z)))."""

    kind: str
    arg: object
    expected: sp.Expr | None = None


@dataclass
class ReductionSpec:
    name: str
    var: str
    dep: str
    invariant: sp.Expr
    multiplier: sp.Expr
    dep_real: bool = False
    chart: tuple[str, sp.Expr] | None = None
    parity: dict[frozenset[int], str] = field(default_factory=dict)
    reflected_multiplier: dict[frozenset[int], sp.Expr] = field(default_factory=dict)
    constraints: dict[str, sp.Expr] = field(default_factory=dict)
    stages: list[Stage] = field(default_factory=list)
    nonvanishing: list[sp.Expr] = field(default_factory=list)
    positive: list[sp.Expr] = field(default_factory=list)
    expected: sp.Expr | None = None


@dataclass(frozen=True)
class ReducedODE:
    expr: sp.Expr
    var: str
    dep: str
    dep_real: bool = False

    @property
    def families(self) -> set[tuple[frozenset[int], bool]]:
        return {s.coord.family() for s in jets_in(self.expr) if s.coord.dep == self.dep}

    @property
    def local(self) -> bool:
        return not any(mask for mask, _ in self.families)

    def jet(self, k: int = 0, *, mask: bool = False, conj: bool = False) -> Jet:
        return ode_jet(self.var, self.dep, k, self.dep_real, mask=mask, conj=conj)

    def order(self) -> int:
        return max((s.coord.order for s in jets_in(self.expr) if s.coord.dep == self.dep), default=0)


def ode_jet(var: str, dep: str, k: int = 0, real: bool = False, *, mask=False, conj=False) -> Jet:
    return Jet(JetCoordinate(dep, (var,), (k,), frozenset({0}) if mask else frozenset(), conj, real))


# -- parity ---------------------------------------------------------------------

def _reflect_base(e: sp.Expr, axes) -> sp.Expr:
    return e.xreplace({base_var(a): -base_var(a) for a in axes})


def real_powers(e: sp.Expr) -> sp.Expr:
    """Read ``b^(p/q)`` with odd ``q`` as the real root ``sign(b)^p |b|^(p/q)``."""
    def rewrite(node):
        if isinstance(node, sp.Pow) and node.exp.is_Rational and not node.exp.is_Integer and node.exp.q % 2:
            return sp.sign(node.base) ** node.exp.p * sp.Abs(node.base) ** node.exp
        return node
    return e.replace(lambda n: isinstance(n, sp.Pow), rewrite)


def infer_parity(y: sp.Expr, axes) -> str | None:
    if not any(base_var(a) in y.free_symbols for a in axes):
        return "fixed"
    for form in (y, real_powers(y)):
        r = canonicalize(_reflect_base(form, axes))
        if canonicalize(r - form) == 0:
            return "even"
        if canonicalize(r + form) == 0:
            return "odd"
    return None


def check_parity(spec: ReductionSpec, system: EquationSystem) -> dict[frozenset[int], str]:
    """Validated parity of the invariant under every reflection the system uses."""
    out = {}
    for mask in system.reflection_masks():
        if not mask:
            continue
        axes = [system.axes[i] for i in mask]
        found = infer_parity(spec.invariant, axes)
        declared = spec.parity.get(mask)
        if declared is not None:
            if declared not in PARITIES:
                raise ReductionFailure(f"unknown parity {declared!r}")
            ok = found == declared or (declared == "even" and found == "fixed")
            if not ok:
                raise ReductionFailure(
                    f"invariant declared {declared} under reflection of {','.join(axes)} but is {found or 'neither'}")
        elif found is None:
            raise ReductionFailure(f"invariant is neither even nor odd under reflection of {','.join(axes)}")
        out[mask] = declared or found
    return out


def parity_sound(spec: ReductionSpec, system: EquationSystem) -> bool:
    """For odd masks: ``A(Rx) p(y(Rx))`` equals ``A_R p(-y)``; for even ones ``A_R p(y)``."""
    parities = check_parity(spec, system)
    y = spec.invariant
    for mask, par in parities.items():
        axes = [system.axes[i] for i in mask]
        if all(canonicalize(_reflect_base(f, axes) - (-f if par == "odd" else f)) != 0
               for f in (y, real_powers(y))):
            return False
        a_r = spec.reflected_multiplier.get(mask)
        if a_r is not None:
            # the override must agree with the plain substitution up to branch choice
            plain = _reflect_base(spec.multiplier, axes)
            pts = [{base_var(a): v for a, v in zip(system.axes, vals)} for vals in ((0.7, 1.3), (1.9, 0.4))]
            for pt in pts:
                lhs = complex(sp.N(a_r.xreplace(pt).xreplace(_param_sample(a_r))))
                rhs = complex(sp.N(plain.xreplace(pt).xreplace(_param_sample(plain))))
                if abs(abs(lhs) - abs(rhs)) > 1e-9 * (1 + abs(rhs)):
                    return False
    return True


def _param_sample(e):
    return {s: sp.Rational(3, 2) for s in e.free_symbols if not isinstance(s, Jet)}


# -- substitution ---------------------------------------------------------------

class _Chain:
    """Total derivatives of ``f(x, t, p_k(y(x,t)))``."""

    def __init__(self, y: sp.Expr, var: str, axes):
        self.var = var
        self.grad = {a: canonicalize(sp.diff(y, base_var(a))) for a in axes}

    def D(self, e: sp.Expr, axis: str) -> sp.Expr:
        out = sp.diff(e, base_var(axis))
        g = self.grad[axis]
        if g != 0:
            out += total_derivative(e, self.var, explicit=False) * g
        return canonicalize(out)

    def DJ(self, e, axes, orders) -> sp.Expr:
        for a, o in zip(axes, orders):
            for _ in range(o):
                e = self.D(e, a)
        return e


def _substitution_values(system: EquationSystem, spec: ReductionSpec, parities) -> dict:
    deps = [d for d in system.deps]
    if len(deps) != 1:
        raise ReductionFailure("reductions are defined for a single dependent variable")
    dep = deps[0]
    chain = _Chain(spec.invariant, spec.var, system.axes)
    p0 = ode_jet(spec.var, spec.dep, 0, spec.dep_real)
    p0_reflected = ode_jet(spec.var, spec.dep, 0, spec.dep_real, mask=True)
    cache: dict = {}
    values = {}
    for F in system.equations.values():
        for s in jets_in(F):
            c = s.coord
            if c.dep != dep or c.shift is not None:
                raise ReductionFailure(f"cannot reduce {c.label()}")
            if s in values:
                continue
            mask = c.mask
            key = (mask, c.orders)
            if key not in cache:
                axes = [system.axes[i] for i in mask]
                if mask:
                    a_r = spec.reflected_multiplier.get(mask)
                    if a_r is None:
                        a_r = _reflect_base(spec.multiplier, axes)
                    pr = p0_reflected if parities[mask] == "odd" else p0
                    sign = (-1) ** sum(c.orders[i] for i in mask)
                    cache[key] = canonicalize(sign * chain.DJ(a_r * pr, system.axes, c.orders))
                else:
                    cache[key] = chain.DJ(spec.multiplier * p0, system.axes, c.orders)
            v = cache[key]
            values[s] = conjugate(v) if c.conj else v
    return values


def _simplify(e: sp.Expr) -> sp.Expr:
    e = canonicalize(e)
    e = sp.powsimp(sp.expand_log(e, force=True), force=True, deep=True)
    e = sp.expand_power_base(e, force=True)
    e = canonicalize(sp.powsimp(e, force=True, deep=True))
    return e


def _top_jet(e: sp.Expr, dep: str) -> Jet:
    cands = [s for s in jets_in(e) if s.coord.dep == dep and not s.coord.mask and not s.coord.conj]
    if not cands:
        raise ReductionFailure("reduced expression has no jets of the new dependent variable")
    return max(cands, key=lambda s: (s.coord.order, sp.default_sort_key(s)))


def clean(e: sp.Expr) -> sp.Expr:
    """Clear denominators and the rational content."""
    e = canonicalize(e)
    if e == 0:
        return e
    num = sp.numer(sp.together(e))
    num = canonicalize(num)
    content, prim = sp.Poly(num, *sorted(num.free_symbols, key=sp.default_sort_key)).primitive() \
        if num.free_symbols else (num, sp.S.One)
    if num.free_symbols:
        num = canonicalize(prim.as_expr())
        if content.could_extract_minus_sign():
            num = -num
    return num


def _normalize(e: sp.Expr, dep: str) -> sp.Expr:
    top = _top_jet(e, dep)
    coeff = canonicalize(e).coeff(top, 1)
    if coeff == 0 or jets_in(coeff):
        raise ReductionFailure(f"reduced equation is not linear in {top.coord.label()}")
    return _simplify(canonicalize(e) / coeff)


def apply_reduction(system: EquationSystem, spec: ReductionSpec) -> ReducedODE:
    """Substitute ``u = A p(y)`` (with reflected/conjugated copies) and clean up."""
    if len(system.equations) != 1:
        raise ReductionFailure("reductions are defined for a single equation")
    subs = {param(k): v for k, v in spec.constraints.items()}
    F = canonicalize(next(iter(system.equations.values())).xreplace(subs))
    sys_c = system.with_equations({k: canonicalize(v.xreplace(subs)) for k, v in system.equations.items()},
                                  leading={})
    spec_y = spec.invariant.xreplace(subs)
    spec = _with(spec, invariant=spec_y, multiplier=spec.multiplier.xreplace(subs))
    parities = check_parity(spec, sys_c)
    values = _substitution_values(sys_c, spec, parities)
    e = canonicalize(F.xreplace(values))
    if e == 0:
        raise ReductionFailure("substitution annihilates the equation")
    # declared positive quantities become positive proxies by solving for one base variable
    to_proxy, from_proxy = {}, {}
    for k, P in enumerate(spec.positive):
        P = P.xreplace(subs)
        w = sp.Dummy(f"w{k}", positive=True)
        v = next((base_var(a) for a in reversed(system.axes) if base_var(a) in P.free_symbols), None)
        sol = sp.solve(sp.Eq(P, w), v) if v is not None else []
        if len(sol) != 1:
            raise ReductionFailure(f"cannot use {P} > 0 as a chart")
        to_proxy[v] = sol[0]
        from_proxy[w] = P
    e = _simplify(e.xreplace(to_proxy))
    e = _normalize(e, spec.dep)
    yv = base_var(spec.var)
    ypos = sp.Symbol(spec.var, positive=True)
    if spec.chart is not None:
        axis, expr = spec.chart
        expr = _simplify(expr.xreplace(subs).xreplace(to_proxy))
        e = e.xreplace({base_var(axis): expr.xreplace({yv: ypos})})
    e = _simplify(e.xreplace({yv: ypos})).xreplace({ypos: yv}).xreplace(from_proxy)
    e = canonicalize(e)
    left = [a for a in system.axes if base_var(a) in e.free_symbols and a != spec.var]
    if left:
        raise ReductionFailure(f"not an invariant reduction: residual dependence on {', '.join(left)}")
    return ReducedODE(clean(e), spec.var, spec.dep, spec.dep_real)


def _with(spec: ReductionSpec, **kw) -> ReductionSpec:
    d = dict(spec.__dict__)
    d.update(kw)
    return ReductionSpec(**d)


# -- comparison -------------------------------------------------------------------

def _nonvanishing(f: sp.Expr, var: str, declared) -> bool:
    declared = [canonicalize(d) for d in declared]
    for factor in sp.Mul.make_args(sp.factor(f)):
        if factor.is_number:
            if factor == 0:
                return False
            continue
        if isinstance(factor, sp.exp):
            continue
        base, ex = factor.as_base_exp()
        if isinstance(base, sp.exp):
            continue
        if base == base_var(var):
            continue
        if any(canonicalize(base - d) == 0 or canonicalize(factor - d) == 0 for d in declared):
            continue
        return False
    return True


def compare_canonical(got, expected: sp.Expr, nonvanishing=(), constants=()) -> bool:
    """Equality up to a nonvanishing factor; ``constants`` are arbitrary and may be rescaled."""
    if isinstance(got, ReducedODE):
        var, g = got.var, got.expr
    else:
        g = got
        var = next((s.coord.axes[0] for s in jets_in(g) if len(s.coord.axes) == 1), "y")
    g, e = canonicalize(g), canonicalize(expected)
    if g == 0 or e == 0:
        return g == e
    consts = [param(c) if isinstance(c, str) else c for c in constants]
    if consts:
        g0, e0 = g.xreplace({c: 0 for c in consts}), e.xreplace({c: 0 for c in consts})
        gc, ec = canonicalize(g - g0), canonicalize(e - e0)
        if (gc == 0) != (ec == 0) or jets_in(gc) or jets_in(ec):
            return False
        return compare_canonical(g0, e0, nonvanishing) if g0 != 0 or e0 != 0 else True
    ratio = sp.cancel(sp.together(g / e))
    if jets_in(ratio):
        ratio = sp.simplify(ratio)
    if jets_in(ratio) or ratio == 0:
        return False
    if canonicalize(g - canonicalize(ratio * e)) != 0 and sp.simplify(g - ratio * e) != 0:
        return False
    return _nonvanishing(ratio, var, nonvanishing)


# -- integration and change of variables -------------------------------------------

class NotIntegrable(ReductionFailure):
    pass


def integrate_once(ode: ReducedODE, constant: str = "C") -> ReducedODE:
    """Antiderivative of an exact ``D_y``-image, plus a constant of integration."""
    if not ode.local:
        raise NotIntegrable("not integrable by pattern: nonlocal terms present")
    y = base_var(ode.var)
    E = canonicalize(ode.expr)
    result = sp.S.Zero
    for _ in range(4 * ode.order() + 8):
        if E == 0:
            break
        n = max((s.coord.order for s in jets_in(E) if s.coord.dep == ode.dep), default=-1)
        if n <= 0:
            if n == 0 or jets_in(E):
                raise NotIntegrable("not integrable by pattern")
            F = sp.integrate(E, y)
        else:
            top = ode.jet(n)
            if conj_jets := [s for s in jets_in(E) if s.coord.conj]:
                raise NotIntegrable(f"not integrable by pattern: conjugate jet {conj_jets[0].coord.label()}")
            if sp.Poly(E, top).degree() != 1:
                raise NotIntegrable("not integrable by pattern: nonlinear in the top derivative")
            c = E.coeff(top, 1)
            F = sp.integrate(c, ode.jet(n - 1))
        F = canonicalize(F)
        result += F
        E = canonicalize(E - total_derivative(F, ode.var))
    else:
        raise NotIntegrable("not integrable by pattern")
    return ReducedODE(canonicalize(result + param(constant)), ode.var, ode.dep, ode.dep_real)


def change_of_variable(ode: ReducedODE, znew: str, mapping: sp.Expr) -> ReducedODE:
    """Rewrite ``ode`` in ``z`` with ``y = mapping(z)`` and ``p_hat(z) = p(y)``."""
    if not ode.local:
        raise ReductionFailure("change of variable requires a local ODE")
    z = base_var(znew)
    gp = canonicalize(sp.diff(mapping, z))
    if gp == 0:
        raise ReductionFailure("map is not invertible: dy/dz vanishes identically")
    if base_var(ode.var) in mapping.free_symbols:
        raise ReductionFailure("map must be expressed in the new variable only")
    n = ode.order()
    rep = {}
    for conj in (False, True):
        P = ode_jet(znew, ode.dep, 0, ode.dep_real, conj=conj)
        for k in range(n + 1):
            rep[ode_jet(ode.var, ode.dep, k, ode.dep_real, conj=conj)] = P
            P = canonicalize(total_derivative(P, znew) / gp)
    e = ode.expr.xreplace(rep).xreplace({base_var(ode.var): mapping})
    zpos = sp.Symbol(znew, positive=True)
    e = _simplify(e.xreplace({z: zpos})).xreplace({zpos: z})
    return ReducedODE(clean(e), znew, ode.dep, ode.dep_real)


# -- catalog driver -------------------------------------------------------------------

@dataclass
class StageResult:
    kind: str
    ode: ReducedODE
    matches: bool | None


@dataclass
class ReductionOutcome:
    spec: ReductionSpec
    ode: ReducedODE
    matches: bool | None
    stages: list[StageResult]

    @property
    def final(self) -> ReducedODE:
        return self.stages[-1].ode if self.stages else self.ode

    @property
    def ok(self) -> bool:
        checks = [self.matches] + [s.matches for s in self.stages]
        return all(c is not False for c in checks)


def run_reduction(system: EquationSystem, spec: ReductionSpec) -> ReductionOutcome:
    ode = apply_reduction(system, spec)
    nv = list(spec.nonvanishing)
    matches = compare_canonical(ode, spec.expected, nv) if spec.expected is not None else None
    stages = []
    cur = ode
    consts: list[str] = []
    for st in spec.stages:
        if st.kind == "integrate":
            cur = integrate_once(cur, st.arg)
            consts.append(st.arg)
        elif st.kind == "change":
            znew, mapping = st.arg
            cur = change_of_variable(cur, znew, mapping)
        else:
            raise ReductionFailure(f"unknown stage {st.kind!r}")
        m = compare_canonical(cur, st.expected, nv, consts) if st.expected is not None else None
        stages.append(StageResult(st.kind, cur, m))
    return ReductionOutcome(spec, ode, matches, stages)
