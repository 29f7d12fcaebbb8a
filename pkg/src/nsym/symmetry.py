"""Prolongation over reflected jet space and the linearized symmetry condition."""
from __future__ import annotations

import itertools
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import sympy as sp

from nsym.expr import (
    Jet,
    JetCoordinate,
    StructuralError,
    base_var,
    canonicalize,
    conjugate,
    jets_in,
    reflect,
    total_derivative,
)
from nsym.linalg import nullspace, rank
from nsym.system import EquationSystem, Generator, solve_leading


class ReductionError(RuntimeError):
    """On-solution substitution did not terminate."""


class NonPolynomialError(StructuralError):
    pass


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NSYM_THREADS", "1")))
    except ValueError:
        return 1


def _multi_indices(m: int, order: int):
    for total in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(m), total):
            J = [0] * m
            for i in combo:
                J[i] += 1
            yield tuple(J)


def _dep_coord(dep: str, axes: tuple[str, ...], real_deps) -> JetCoordinate:
    return JetCoordinate(dep, axes, (0,) * len(axes), frozenset(), False, dep in real_deps)


@dataclass
class ProlongedGenerator:
    """Coefficients ``phi_J`` of the prolonged field, keyed by jet coordinate."""

    generator: Generator
    order: int
    real_deps: frozenset[str]
    table: dict[JetCoordinate, sp.Expr] = field(default_factory=dict)

    @property
    def axes(self) -> tuple[str, ...]:
        return self.generator.axes

    def coefficient(self, coord: JetCoordinate) -> sp.Expr:
        """Coefficient of ``d/d(coord)``, including reflected and conjugated copies."""
        if coord in self.table:
            return self.table[coord]
        base = coord.base()
        if base not in self.table:
            raise KeyError(f"{coord.label()} beyond prolongation order {self.order}")
        value = self.table[base]
        if coord.mask:
            value = reflect(value, [coord.axes[i] for i in coord.mask])
        if coord.conj:
            value = conjugate(value)
        return canonicalize(value)

    def recursion_check(self) -> bool:
        """Recompute every stored ``phi_{J+1_i}`` from ``phi_J``; True when all agree."""
        g = self.generator
        for coord, value in self.table.items():
            if not coord.is_base:
                continue
            for i, axis in enumerate(self.axes):
                nxt = coord.derived(i)
                if nxt not in self.table:
                    continue
                expected = _next_coefficient(g, coord, value, i, self.axes)
                if canonicalize(expected - self.table[nxt]) != 0:
                    return False
        return True


def _next_coefficient(g: Generator, coord: JetCoordinate, value, i: int, axes) -> sp.Expr:
    axis = axes[i]
    out = total_derivative(value, axis)
    for j, other in enumerate(axes):
        dxi = total_derivative(g.xi[other], axis)
        if dxi != 0:
            out -= dxi * Jet(coord.derived(j))
    return canonicalize(out)


def prolong(g: Generator, order: int, real_deps=frozenset()) -> ProlongedGenerator:
    """Fill ``phi_J`` for ``|J| <= order`` by the standard recursion."""
    if order < 1:
        raise ValueError("prolongation order must be at least 1")
    axes = g.axes
    real_deps = frozenset(real_deps) | _real_deps_of(g)
    pg = ProlongedGenerator(g, order, real_deps)
    for dep, phi in g.phi.items():
        root = _dep_coord(dep, axes, real_deps)
        pg.table[root] = canonicalize(phi)
        for J in _multi_indices(len(axes), order):
            if not any(J):
                continue
            i = max(k for k, v in enumerate(J) if v)
            prev = list(J)
            prev[i] -= 1
            pc = root.with_orders(prev)
            pg.table[root.with_orders(J)] = _next_coefficient(g, pc, pg.table[pc], i, axes)
    return pg


def _real_deps_of(g: Generator) -> frozenset[str]:
    out = set()
    for comp in list(g.xi.values()) + list(g.phi.values()):
        for s in jets_in(comp):
            if s.coord.real:
                out.add(s.coord.dep)
    return frozenset(out)


def prolong_reflected(g: Generator, system: EquationSystem, order: int | None = None) -> ProlongedGenerator:
    """Prolongation including every reflected/conjugated family used by ``system``."""
    order = max(1, system.max_order() if order is None else order)
    for e in system.equations.values():
        for s in jets_in(e):
            if s.coord.axes != system.axes:
                raise StructuralError(f"{s.coord.label()} uses axes outside {system.axes}")
    pg = prolong(g, order, system.real_deps)
    fams = system.families()
    for coord in list(pg.table):
        for mask, conj in fams:
            if mask or conj:
                c = coord.reflected(mask)
                if conj:
                    c = c.conjugated()
                pg.table[c] = pg.coefficient(c)
    return pg


def apply_linearized_condition(system: EquationSystem, g: Generator) -> list[sp.Expr]:
    """``pr v (F_k)`` for every equation, before restriction to solutions."""
    pg = prolong_reflected(g, system)
    out = []
    for F in system.equations.values():
        r = sp.S.Zero
        for axis in system.axes:
            r += g.xi[axis] * sp.diff(F, base_var(axis))
        for s in sorted(jets_in(F), key=sp.default_sort_key):
            r += pg.coefficient(s.coord) * sp.diff(F, s)
        out.append(canonicalize(r))
    return out


class _OnSolutionRules:
    def __init__(self, system: EquationSystem):
        self.system = system
        self.rules = []
        if system.equations and not system.leading:
            raise ReductionError("no leading derivatives declared; add 'solve ... from ...'")
        for name, lead in system.leading.items():
            self.rules.append((lead, solve_leading(system.equations[name], lead)))
        self._cache: dict = {}
        self.bound = 3 * max(1, system.max_order()) + 6

    def _derived_rhs(self, k: int, extra: tuple[int, ...]) -> sp.Expr:
        key = (k, extra)
        if key not in self._cache:
            lead, rhs = self.rules[k]
            e = rhs
            for axis, o in zip(lead.axes, extra):
                for _ in range(o):
                    e = total_derivative(e, axis)
            self._cache[key] = e
        return self._cache[key]

    def replacement(self, s: Jet):
        c = s.coord
        for k, (lead, _) in enumerate(self.rules):
            if lead.dep != c.dep or lead.axes != c.axes or c.shift is not None:
                continue
            extra = tuple(a - b for a, b in zip(c.orders, lead.orders))
            if min(extra) < 0:
                continue
            value = self._derived_rhs(k, extra)
            if c.mask:
                value = reflect(value, [c.axes[i] for i in c.mask])
            if c.conj:
                value = conjugate(value)
            return value
        return None


def reduce_on_solutions(residual, system: EquationSystem) -> sp.Expr:
    """Eliminate leading derivatives (and their reflected/conjugated copies)."""
    rules = _OnSolutionRules(system)
    e = canonicalize(residual)
    for _ in range(rules.bound):
        rep = {}
        for s in jets_in(e):
            if s.coord.order > rules.bound:
                raise ReductionError(f"derivative order bound exceeded at {s.coord.label()}")
            v = rules.replacement(s)
            if v is not None:
                rep[s] = v
        if not rep:
            return e
        e = canonicalize(e.xreplace(rep))
    raise ReductionError("on-solution substitution did not terminate; check leading-derivative declarations")


@dataclass
class Verdict:
    is_symmetry: bool
    residuals: list[sp.Expr]


def verify_symmetry(system: EquationSystem, g: Generator) -> Verdict:
    residuals = [reduce_on_solutions(r, system) for r in apply_linearized_condition(system, g)]
    return Verdict(all(r == 0 for r in residuals), residuals)


# -- determining equations ------------------------------------------------------

@dataclass
class DeterminingSystem:
    equations: list[tuple[str, sp.Expr]]
    unknowns: list[sp.Symbol]

    def __len__(self) -> int:
        return len(self.equations)


def _collect(expr: sp.Expr, gens: set) -> dict[sp.Expr, sp.Expr]:
    groups: dict[sp.Expr, sp.Expr] = {}
    for term in sp.Add.make_args(sp.expand(expr)):
        mono, coeff = sp.S.One, sp.S.One
        for f in sp.Mul.make_args(term):
            fs = f.free_symbols
            if fs and fs <= gens:
                b, e = f.as_base_exp()
                if not (b in gens and e.is_Integer and e > 0):
                    raise NonPolynomialError(f"residual is not polynomial in {f}")
                mono *= f
            elif fs & gens:
                raise NonPolynomialError(f"residual factor {f} mixes unknowns and jet coordinates")
            else:
                coeff *= f
        groups[mono] = groups.get(mono, 0) + coeff
    return groups


def extract_determining(system: EquationSystem, ansatz: Generator, unknowns) -> DeterminingSystem:
    """Collect the on-solution residual of ``ansatz`` by monomials in jets and base variables."""
    unknowns = list(unknowns)
    if ansatz.is_zero():
        return DeterminingSystem([], unknowns)
    residuals = [reduce_on_solutions(r, system) for r in apply_linearized_condition(system, ansatz)]
    eqs: list[tuple[str, sp.Expr]] = []
    for k, (name, r) in enumerate(zip(system.equations, residuals)):
        gens = set(jets_in(r)) | {v for v in r.free_symbols if v.name in system.axes and not isinstance(v, Jet)}
        for mono, coeff in sorted(_collect(r, gens).items(), key=lambda kv: sp.default_sort_key(kv[0])):
            coeff = sp.expand(coeff)
            if coeff != 0:
                eqs.append((f"{name}:{mono}", coeff))
    return DeterminingSystem(eqs, unknowns)


def _rows(det: DeterminingSystem) -> list[list[Fraction]]:
    rows = []
    for _, e in det.equations:
        poly = sp.Poly(e, *det.unknowns)
        if poly.total_degree() > 1 or poly.coeff_monomial(1) != 0:
            raise NonPolynomialError(f"determining equation not linear homogeneous: {e}")
        re, im = [], []
        for u in det.unknowns:
            c = poly.coeff_monomial(u)
            cr, ci = sp.re(c), sp.im(c)
            if not (cr.is_Rational and ci.is_Rational):
                raise NonPolynomialError(f"coefficient {c} is not a Gaussian rational")
            re.append(Fraction(int(cr.p), int(cr.q)))
            im.append(Fraction(int(ci.p), int(ci.q)))
        rows.append(re)
        rows.append(im)
    return rows


@dataclass
class Ansatz:
    generator: Generator
    unknowns: list[sp.Symbol]


def _monomials(vars_, degree: int) -> list[sp.Expr]:
    out = []
    for d in range(degree, -1, -1):
        for combo in itertools.combinations_with_replacement(vars_, d):
            out.append(sp.Mul(*combo))
    return out


def build_ansatz(system: EquationSystem, degree: int, real_fields: bool) -> Ansatz:
    """Polynomial point-symmetry ansatz with one unknown per real coefficient.

    Unknowns are ordered: higher-degree monomials first, xi before phi, real
    part before imaginary part.  This is the fixed order used for pivoting.
    """
    xs = list(system.base_vars)
    monos = _monomials(xs, degree)
    unknowns: list[sp.Symbol] = []
    counter = itertools.count()

    def coefficient():
        k = next(counter)
        r = sp.Symbol(f"k{k}r", real=True)
        unknowns.append(r)
        if real_fields:
            return r
        s = sp.Symbol(f"k{k}i", real=True)
        unknowns.append(s)
        return r + sp.I * s

    xi = {a: sum((coefficient() * m for m in monos), sp.S.Zero) for a in system.axes}
    factors: list[sp.Expr] = []
    for d in system.deps:
        u = system.jet(d)
        factors.append(u)
        if d not in system.real_deps:
            factors.append(system.jet(d, conj=True))
    factors.append(sp.S.One)
    phi = {}
    for d in system.deps:
        phi[d] = sum((coefficient() * m * f for f in factors for m in monos), sp.S.Zero)
    return Ansatz(Generator(xi, phi), unknowns)


@dataclass
class Classification:
    basis: list[Generator]
    dimension: int
    ansatz: Ansatz
    determining: DeterminingSystem
    real_fields: bool


def _vector_to_generator(ansatz: Ansatz, vec, name: str = "") -> Generator:
    values = {u: sp.Rational(v.numerator, v.denominator) for u, v in zip(ansatz.unknowns, vec)}
    g = ansatz.generator
    return Generator({k: canonicalize(v.xreplace(values)) for k, v in g.xi.items()},
                     {k: canonicalize(v.xreplace(values)) for k, v in g.phi.items()}, name)


def classify_ansatz(system: EquationSystem, degree: int = 2, real_fields: bool | None = None
                    ) -> Classification:
    """Solve the determining equations of the polynomial ansatz exactly."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if real_fields is None:
        real_fields = not system.is_complex
    ansatz = build_ansatz(system, degree, real_fields)
    det = extract_determining(system, ansatz.generator, ansatz.unknowns)
    rows = _rows(det)
    basis = nullspace(rows, len(ansatz.unknowns))
    gens = [_vector_to_generator(ansatz, v, f"G{k + 1}") for k, v in enumerate(basis)]
    return Classification(gens, len(gens), ansatz, det, real_fields)


def generator_coordinates(g: Generator, ansatz: Ansatz) -> list[Fraction]:
    """Real coordinates of ``g`` in the ansatz parameter space."""
    diff = Generator({k: canonicalize(v - g.xi.get(k, 0)) for k, v in ansatz.generator.xi.items()},
                     {k: canonicalize(v - g.phi.get(k, 0)) for k, v in ansatz.generator.phi.items()})
    eqs = []
    for comp in list(diff.xi.values()) + list(diff.phi.values()):
        gens = {s for s in comp.free_symbols if s not in set(ansatz.unknowns)}
        for _, c in _collect(comp, gens).items():
            for part in (sp.re(sp.expand(c)), sp.im(sp.expand(c))):
                part = sp.expand(part)
                if part != 0:
                    eqs.append(part)
    sol = sp.solve(eqs, ansatz.unknowns, dict=True)
    if not sol:
        raise ValueError(f"generator {g.name or g} lies outside the ansatz")
    vals = sol[0]
    out = []
    for u in ansatz.unknowns:
        v = sp.nsimplify(vals.get(u, 0))
        if v.free_symbols:
            v = v.xreplace({s: 0 for s in v.free_symbols})
        out.append(Fraction(int(v.p), int(v.q)))
    return out


def span_rank(gens: list[Generator], ansatz: Ansatz) -> int:
    rows = [generator_coordinates(g, ansatz) for g in gens]
    return rank(rows, len(ansatz.unknowns))


def spans_same(a: list[Generator], b: list[Generator], ansatz: Ansatz) -> bool:
    """Real span equality of two generator lists."""
    ra, rb = span_rank(a, ansatz), span_rank(b, ansatz)
    return ra == rb == span_rank(a + b, ansatz)


def contains(span: list[Generator], gens: list[Generator], ansatz: Ansatz) -> bool:
    return span_rank(span, ansatz) == span_rank(span + gens, ansatz)


# -- brackets and characteristics ----------------------------------------------

def _apply_field(g: Generator, f: sp.Expr) -> sp.Expr:
    out = sp.S.Zero
    for axis, xi in g.xi.items():
        out += xi * sp.diff(f, base_var(axis))
    for s in jets_in(f):
        c = s.coord
        if c.order or c.mask or c.shift is not None:
            raise StructuralError("bracket of non-point fields")
        phi = g.phi.get(c.dep, sp.S.Zero)
        out += (conjugate(phi) if c.conj else phi) * sp.diff(f, s)
    return canonicalize(out)


def lie_bracket(g1: Generator, g2: Generator) -> Generator:
    """Commutator ``[g1, g2]`` of point vector fields on (x, u, conj u)."""
    xi = {a: canonicalize(_apply_field(g1, g2.xi[a]) - _apply_field(g2, g1.xi[a])) for a in g1.xi}
    phi = {d: canonicalize(_apply_field(g1, g2.phi[d]) - _apply_field(g2, g1.phi[d])) for d in g1.phi}
    return Generator(xi, phi, f"[{g1.name},{g2.name}]" if g1.name and g2.name else "")


def to_evolutionary(g: Generator, system: EquationSystem | None = None, real_deps=frozenset()
                    ) -> dict[str, sp.Expr]:
    """Characteristics ``Q = phi - xi^i u_i``, reduced on solutions when ``system`` is given."""
    if system is not None:
        real_deps = system.real_deps
    real_deps = frozenset(real_deps) | _real_deps_of(g)
    axes = g.axes
    out = {}
    for dep, phi in g.phi.items():
        root = _dep_coord(dep, axes, real_deps)
        Q = phi - sum((g.xi[a] * Jet(root.derived(i)) for i, a in enumerate(axes)), sp.S.Zero)
        Q = canonicalize(Q)
        if system is not None:
            Q = reduce_on_solutions(Q, system)
        out[dep] = Q
    return out


def evolutionary_residuals(system: EquationSystem, g: Generator) -> list[sp.Expr]:
    """``pr v(F)`` assembled from the characteristic form, reduced on solutions.

    Uses ``xi^i D_i F + sum_J (D_J Q) dF/du_J`` on each family; the family
    coefficient is the reflected/conjugated copy of ``D_J Q + xi^i u_{J+1_i}``.
    """
    Q = to_evolutionary(g, None, system.real_deps)
    out = []
    for F in system.equations.values():
        r = sp.S.Zero
        for axis in system.axes:
            r += g.xi[axis] * sp.diff(F, base_var(axis))
        for s in jets_in(F):
            c = s.coord
            base = c.base()
            v = Q[c.dep]
            for i, axis in enumerate(system.axes):
                for _ in range(base.orders[i]):
                    v = total_derivative(v, axis)
            v = v + sum((g.xi[a] * Jet(base.derived(i)) for i, a in enumerate(system.axes)), sp.S.Zero)
            if c.mask:
                v = reflect(v, [system.axes[i] for i in c.mask])
            if c.conj:
                v = conjugate(v)
            r += v * sp.diff(F, s)
        out.append(reduce_on_solutions(r, system))
    return out


# -- real reformulation -----------------------------------------------------------

def realify(system: EquationSystem, names: dict[str, tuple[str, str]] | None = None) -> EquationSystem:
    """Split complex dependents ``q = u - i v`` and equations into real and imaginary parts."""
    complex_deps = [d for d in system.deps if d not in system.real_deps]
    if not complex_deps:
        return system
    names = dict(names or {})
    if len(complex_deps) == 1 and complex_deps[0] not in names:
        names[complex_deps[0]] = ("u", "v")
    for d in complex_deps:
        names.setdefault(d, (f"{d}_re", f"{d}_im"))
    new_deps: list[str] = []
    for d in system.deps:
        new_deps.extend(names[d] if d in names else (d,))
    real_deps = frozenset(system.real_deps) | {n for d in complex_deps for n in names[d]}

    def split(e: sp.Expr) -> sp.Expr:
        rep = {}
        for s in jets_in(e):
            c = s.coord
            if c.dep not in names:
                continue
            un, vn = names[c.dep]
            u = Jet(JetCoordinate(un, c.axes, c.orders, c.mask, False, True, c.shift))
            v = Jet(JetCoordinate(vn, c.axes, c.orders, c.mask, False, True, c.shift))
            rep[s] = u + sp.I * v if c.conj else u - sp.I * v
        return canonicalize(e.xreplace(rep))

    equations: dict[str, sp.Expr] = {}
    leading: dict[str, JetCoordinate] = {}
    for name, F in system.equations.items():
        G = split(F)
        Gc = conjugate(G)
        parts = {f"{name}_re": canonicalize((G + Gc) / 2), f"{name}_im": canonicalize((G - Gc) / (2 * sp.I))}
        lead = system.leading.get(name)
        cands = []
        if lead is not None and lead.dep in names:
            cands = [JetCoordinate(n, lead.axes, lead.orders, frozenset(), False, True) for n in names[lead.dep]]
        elif lead is not None:
            cands = [lead]
        assigned = {}
        for pname, P in parts.items():
            for c in cands:
                if c in assigned.values():
                    continue
                s = Jet(c)
                if s in jets_in(P) and sp.Poly(P, s).degree() == 1 and not jets_in(P.coeff(s, 1)):
                    assigned[pname] = c
                    break
        # equations ordered by the dependent they are solved for
        order = sorted(parts, key=lambda p: new_deps.index(assigned[p].dep) if p in assigned else len(new_deps))
        for p in order:
            if parts[p] != 0:
                equations[p] = parts[p]
                if p in assigned:
                    leading[p] = assigned[p]
    return EquationSystem(system.axes, tuple(new_deps), equations, leading, real_deps)


def bracket_table(system: EquationSystem, basis: list[Generator]
                  ) -> list[tuple[int, int, Generator, bool]]:
    """``(i, j, [g_i, g_j], is_symmetry)`` for every pair ``i < j``."""
    pairs = [(i, j) for i in range(len(basis)) for j in range(i + 1, len(basis))]

    def check(p):
        i, j = p
        b = lie_bracket(basis[i], basis[j])
        return i, j, b, verify_symmetry(system, b).is_symmetry

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        return list(ex.map(check, pairs))


def closure_failures(system: EquationSystem, basis: list[Generator]) -> list[tuple[int, int, Generator]]:
    """Pairs (i < j) whose bracket fails the symmetry test; diagonal brackets vanish."""
    return [(i, j, b) for i, j, b, ok in bracket_table(system, basis) if not ok]
