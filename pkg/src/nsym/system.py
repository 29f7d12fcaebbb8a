"""Equation systems and point-symmetry generators."""
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
)


@dataclass(frozen=True)
class EquationSystem:
    """Equations ``F_k = 0`` with declared leading derivatives.

    ``leading`` maps an equation name to the jet that equation is solved for
    when restricting to solutions.
    """

    axes: tuple[str, ...]
    deps: tuple[str, ...]
    equations: dict[str, sp.Expr]
    leading: dict[str, JetCoordinate] = field(default_factory=dict)
    real_deps: frozenset[str] = frozenset()

    def __post_init__(self):
        for name, jc in self.leading.items():
            if name not in self.equations:
                raise StructuralError(f"leading derivative declared for unknown equation {name!r}")
            validate_leading(self.equations[name], jc)

    def __hash__(self):
        return hash((self.axes, self.deps, tuple(self.equations), tuple(map(str, self.equations.values()))))

    @property
    def base_vars(self) -> tuple[sp.Symbol, ...]:
        return tuple(base_var(a) for a in self.axes)

    @property
    def is_complex(self) -> bool:
        return any(d not in self.real_deps for d in self.deps)

    def coord(self, dep: str, *diff: str, mask=(), conj: bool = False) -> JetCoordinate:
        orders = tuple(diff.count(a) for a in self.axes)
        m = frozenset(self.axes.index(a) for a in mask)
        return JetCoordinate(dep, self.axes, orders, m, conj, dep in self.real_deps)

    def jet(self, dep: str, *diff: str, mask=(), conj: bool = False) -> Jet:
        return Jet(self.coord(dep, *diff, mask=mask, conj=conj))

    def families(self) -> set[tuple[frozenset[int], bool]]:
        """Reflection/conjugation families present in the equations (the base family included)."""
        fams = {(frozenset(), False)}
        for e in self.equations.values():
            for s in jets_in(e):
                fams.add(s.coord.family())
        return fams

    def reflection_masks(self) -> set[frozenset[int]]:
        return {m for m, _ in self.families()}

    def max_order(self) -> int:
        return max((s.coord.order for e in self.equations.values() for s in jets_in(e)), default=0)

    def with_equations(self, equations: dict[str, sp.Expr], leading=None) -> EquationSystem:
        return EquationSystem(self.axes, self.deps, equations,
                              dict(self.leading if leading is None else leading), self.real_deps)


def validate_leading(e: sp.Expr, jc: JetCoordinate) -> None:
    s = Jet(jc)
    if s not in jets_in(e):
        raise StructuralError(f"declared leading derivative {jc.label()} does not appear in equation")
    poly = sp.Poly(canonicalize(e), s)
    if poly.degree() != 1:
        raise StructuralError(f"declared leading derivative {jc.label()} is not linear in equation")
    if jets_in(poly.coeff_monomial(s)):
        raise StructuralError(f"coefficient of leading derivative {jc.label()} depends on jets")


def solve_leading(e: sp.Expr, jc: JetCoordinate) -> sp.Expr:
    s = Jet(jc)
    e = canonicalize(e)
    coeff = e.coeff(s, 1)
    rest = canonicalize(e - coeff * s)
    return canonicalize(-rest / coeff)


@dataclass(frozen=True)
class Generator:
    """Point vector field ``xi^i d/dx^i + phi^alpha d/du^alpha``."""

    xi: dict[str, sp.Expr]
    phi: dict[str, sp.Expr]
    name: str = ""

    def __post_init__(self):
        for comp in list(self.xi.values()) + list(self.phi.values()):
            for s in jets_in(comp):
                c = s.coord
                if c.order or c.mask or c.shift is not None:
                    raise StructuralError(
                        f"generator component depends on {c.label()}; only point symmetries are supported"
                    )

    def __hash__(self):
        return hash((tuple(sorted(self.xi)), tuple(sorted(self.phi)), self.name))

    @property
    def axes(self) -> tuple[str, ...]:
        return tuple(self.xi)

    def canonical(self) -> Generator:
        return Generator({k: canonicalize(v) for k, v in self.xi.items()},
                         {k: canonicalize(v) for k, v in self.phi.items()}, self.name)

    def is_zero(self) -> bool:
        g = self.canonical()
        return all(v == 0 for v in list(g.xi.values()) + list(g.phi.values()))

    def __add__(self, other: Generator) -> Generator:
        return Generator({k: canonicalize(v + other.xi.get(k, 0)) for k, v in self.xi.items()},
                         {k: canonicalize(v + other.phi.get(k, 0)) for k, v in self.phi.items()})

    def __sub__(self, other: Generator) -> Generator:
        return self + other.scaled(-1)

    def scaled(self, c) -> Generator:
        return Generator({k: canonicalize(c * v) for k, v in self.xi.items()},
                         {k: canonicalize(c * v) for k, v in self.phi.items()})

    def equals(self, other: Generator) -> bool:
        return (self - other).is_zero()

    def conjugate_components(self) -> Generator:
        return Generator({k: conjugate(v) for k, v in self.xi.items()},
                         {k: conjugate(v) for k, v in self.phi.items()}, self.name)


def zero_generator(system: EquationSystem) -> Generator:
    return Generator({a: sp.S.Zero for a in system.axes}, {d: sp.S.Zero for d in system.deps})
