"""Residual certification of closed-form and implicit solutions."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import sympy as sp
from scipy import integrate, optimize

from nsym.elliptic import jacobi_sn
from nsym.expr import Jet, base_var, compile_numeric, jets_in, param

DEFAULT_SAMPLES = 256
RESAMPLE_CAP = 10


class DomainError(ValueError):
    """Parameters outside the range where the solution formula is real."""


@dataclass
class SolutionAnsatz:
    name: str
    var: str
    dep: str
    equation: sp.Expr
    closed_form: sp.Expr | None = None
    params: dict[str, sp.Expr] = field(default_factory=dict)
    kind: str = "closed"
    domain: tuple[float, float] = (-1.0, 1.0)
    tolerance: float = 1e-10

    def numeric_params(self) -> dict[str, complex]:
        return {k: complex(sp.N(v)) for k, v in self.params.items()}

    def real_params(self) -> dict[str, float]:
        out = {}
        for k, v in self.numeric_params().items():
            if abs(v.imag) > 0:
                raise DomainError(f"parameter {k} must be real")
            out[k] = v.real
        return out


@dataclass
class ResidualReport:
    max_abs: float
    max_rel: float
    samples: int
    rejected: int = 0
    worst_point: float | None = None
    tolerance: float | None = None

    @property
    def passed(self) -> bool:
        return self.tolerance is not None and self.max_rel < self.tolerance

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NSYM_THREADS", "1")))
    except ValueError:
        return 1


def _finite(a: np.ndarray) -> np.ndarray:
    return np.isfinite(a.real) & np.isfinite(a.imag)


class _Evaluator:
    """Equation terms as vectorised functions of the sample coordinate."""

    def __init__(self, equation: sp.Expr, closed_form: sp.Expr, var: str, dep: str, values: dict):
        y = base_var(var)
        subs = {param(k): sp.nsimplify(v) if isinstance(v, (int, float)) else v for k, v in values.items()}
        f = sp.sympify(closed_form).xreplace(subs)
        eq = sp.sympify(equation).xreplace(subs)
        jets = [s for s in jets_in(eq)]
        for s in jets:
            if s.coord.dep != dep:
                raise ValueError(f"equation uses {s.coord.label()} which is not {dep}")
        order = max((s.coord.order for s in jets), default=0)
        derivs = [f]
        for _ in range(order):
            derivs.append(sp.diff(derivs[-1], y))
        self.jets = jets
        self.funcs = {}
        for s in jets:
            k = s.coord.order
            expr = derivs[k]
            if s.coord.mask:
                expr = expr.xreplace({y: -y})
            self.funcs[s] = compile_numeric(expr, [y])
        self.conj = {s: s.coord.conj and not s.coord.real for s in jets}
        self.terms = [compile_numeric(t, jets + [y]) for t in sp.Add.make_args(sp.expand(eq))]
        self.symbolic_derivs = [compile_numeric(d, [y]) for d in derivs]

    def __call__(self, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ys = np.asarray(ys, dtype=complex)
        with np.errstate(all="ignore"):
            args = []
            for s in self.jets:
                v = np.broadcast_to(np.asarray(self.funcs[s](ys), dtype=complex), ys.shape)
                args.append(np.conj(v) if self.conj[s] else v)
            terms = [np.broadcast_to(np.asarray(t(*args, ys), dtype=complex), ys.shape) for t in self.terms]
        total = np.sum(terms, axis=0)
        scale = np.max(np.abs(terms), axis=0)
        return total, scale


def residual_sample(equation: sp.Expr, sol: SolutionAnsatz, n: int = DEFAULT_SAMPLES, seed: int = 0
                    ) -> ResidualReport:
    """Sample ``|equation|`` on the closed form, uniformly over ``sol.domain``.

    Reflected jets are evaluated at ``-y`` exactly.  Non-finite samples are
    rejected and redrawn, at most ``10 n`` draws in total.
    """
    if sol.closed_form is None:
        raise ValueError(f"solution {sol.name!r} has no closed form")
    ev = _Evaluator(equation, sol.closed_form, sol.var, sol.dep, sol.numeric_params())
    rng = np.random.default_rng(seed)
    lo, hi = sol.domain
    kept_abs, kept_rel, kept_y = [], [], []
    drawn = rejected = 0
    while len(kept_y) < n:
        if drawn >= RESAMPLE_CAP * n:
            raise ArithmeticError(f"too many singular samples ({rejected}) for {sol.name!r}")
        batch = rng.uniform(lo, hi, size=n - len(kept_y))
        drawn += batch.size
        chunks = np.array_split(batch, _threads())
        with ThreadPoolExecutor(max_workers=_threads()) as ex:
            parts = list(ex.map(ev, chunks))
        res = np.concatenate([p[0] for p in parts])
        scale = np.concatenate([p[1] for p in parts])
        ok = _finite(res) & np.isfinite(scale)
        rejected += int((~ok).sum())
        kept_abs.extend(np.abs(res[ok]))
        kept_rel.extend(np.abs(res[ok]) / (1.0 + scale[ok]))
        kept_y.extend(batch[ok])
    kept_abs, kept_rel = np.array(kept_abs), np.array(kept_rel)
    worst = int(np.argmax(kept_rel))
    return ResidualReport(float(kept_abs.max()), float(kept_rel.max()), n, rejected,
                          float(kept_y[worst]), sol.tolerance)


def derivative_agreement(sol: SolutionAnsatz, n: int = 32, seed: int = 0, h: float = 1e-4) -> float:
    """Max relative gap between symbolic first derivatives and central differences."""
    ev = _Evaluator(sol.equation, sol.closed_form, sol.var, sol.dep, sol.numeric_params())
    f, df = ev.symbolic_derivs[0], ev.symbolic_derivs[1] if len(ev.symbolic_derivs) > 1 else None
    if df is None:
        y = base_var(sol.var)
        df = compile_numeric(sp.diff(sp.sympify(sol.closed_form).xreplace(
            {param(k): v for k, v in sol.params.items()}), y), [y])
    lo, hi = sol.domain
    ys = np.random.default_rng(seed).uniform(lo + 2 * h, hi - 2 * h, size=n)
    fd = (-f(ys + 2 * h) + 8 * f(ys + h) - 8 * f(ys - h) + f(ys - 2 * h)) / (12 * h)
    exact = np.broadcast_to(np.asarray(df(ys), dtype=complex), ys.shape)
    return float(np.max(np.abs(fd - exact) / (1 + np.abs(exact))))


# -- Jacobi-sn solution of the local NLS reduction ---------------------------------

def sn_solution_params(c: float, C1: float, C2: float) -> tuple[float, float, float]:
    """(amplitude, frequency, m) of ``p(y) = A sn(B (sqrt(-(c-1) y) + C1), m)``."""
    if c == 0 or C2 == 0:
        return 0.0, 0.0, 0.0
    if c <= 1:
        raise DomainError("c - 1 > 0 is required for a real modulus C2/sqrt(c - 1)")
    m = C2 * C2 / (c - 1)
    if m > 1:
        raise DomainError(f"modulus m = C2^2/(c - 1) = {m:g} exceeds 1")
    rad = c / (C2 * C2 + c - 1)
    if rad <= 0:
        raise DomainError("c/(C2^2 + c - 1) must be positive")
    s = math.sqrt(rad)
    return C2 * s, s, m


SN_EQUATION = "4*y*D[p,y,y] - c*p + 2*D[p,y] + 2*p^2*conj(p)"
SN_FIELD = "C2*sqrt(c/(C2^2 + c - 1))*sn(sqrt(c/(C2^2 + c - 1))*(sqrt(-(c - 1)*y) + C1), C2^2/(c - 1))"


def sn_ansatz(c: float, C1: float, C2: float, domain=(-3.0, -0.1), tolerance: float = 1e-8) -> SolutionAnsatz:
    from nsym.parser import parse_expression

    eq = parse_expression(SN_EQUATION, axes=("y",), deps=("p",), real=("p",))
    fld = parse_expression(SN_FIELD, axes=("y",), deps=(), real=())
    params = {"c": sp.nsimplify(c), "C1": sp.nsimplify(C1), "C2": sp.nsimplify(C2)}
    return SolutionAnsatz("sn-solution", "y", "p", eq, fld, params, "sn", tuple(domain), tolerance)


def check_sn_solution(c: float, C1: float, C2: float, n: int = DEFAULT_SAMPLES, seed: int = 0,
                      domain=(-3.0, -0.1), tolerance: float = 1e-8) -> ResidualReport:
    """Residual of ``4 y p'' = c p - 2 p' - 2 |p|^2 p`` for the real sn solution.

    The square root ``sqrt(-(c-1) y)`` is real for ``c > 1`` only on ``y < 0``,
    which is where samples are drawn.
    """
    amp, _, _ = sn_solution_params(c, C1, C2)
    if amp == 0.0:
        return ResidualReport(0.0, 0.0, n, 0, None, tolerance)
    if domain[1] > 0:
        raise DomainError("samples must lie in y <= 0 where sqrt(-(c - 1) y) is real")
    sol = sn_ansatz(c, C1, C2, domain, tolerance)
    return residual_sample(sol.equation, sol, n, seed)


def sn_solution_values(c: float, C1: float, C2: float, ys) -> np.ndarray:
    """Direct evaluation of the sn solution through the AGM routine."""
    amp, freq, m = sn_solution_params(c, C1, C2)
    return np.array([amp * jacobi_sn(freq * (math.sqrt(-(c - 1) * y) + C1), m) if amp else 0.0 for y in ys])


# -- quadrature solution of the integrated mKdV reduction -----------------------------

def quartic(a: float, b: float, C1: float, C2: float):
    return lambda s: -b * s**4 + 6 * a * s**2 - 12 * C1 * s + 6 * C2 * b**3


class QuadratureSolution:
    """``z(v) = int_0^v sqrt(6) b^(3/2) / sqrt(Q(s)) ds`` inverted numerically."""

    def __init__(self, a: float, b: float, C1: float, C2: float):
        if b <= 0:
            raise DomainError("b > 0 is required for the real factor b^(3/2)")
        self.a, self.b, self.C1, self.C2 = a, b, C1, C2
        self.Q = quartic(a, b, C1, C2)
        if self.Q(0.0) <= 0:
            raise DomainError("quartic under the root is not positive at s = 0: root inside the path")
        roots = np.roots([-b, 0.0, 6 * a, -12 * C1, 6 * C2 * b**3])
        real = sorted(r.real for r in roots if abs(r.imag) < 1e-12)
        self.upper = min((r for r in real if r > 0), default=math.inf)
        self.lower = max((r for r in real if r < 0), default=-math.inf)
        if not (math.isfinite(self.upper) and math.isfinite(self.lower)):
            raise DomainError("quartic has no bracketing real roots around 0")
        self.k = math.sqrt(6.0) * b**1.5

    def z_of(self, v: float) -> float:
        val, _ = integrate.quad(lambda s: self.k / math.sqrt(self.Q(s)), 0.0, v, epsabs=1e-14, epsrel=1e-13,
                                limit=200)
        return val

    def v_of(self, z: float) -> float:
        lo, hi = 0.95 * self.lower, 0.95 * self.upper
        return optimize.brentq(lambda v: self.z_of(v) - z, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)

    def z_range(self, frac: float = 0.8) -> tuple[float, float]:
        return self.z_of(frac * self.lower), self.z_of(frac * self.upper)


def check_quadrature(a: float, b: float, C1: float, C2: float, n: int = 64, seed: int = 0,
                     h: float = 2e-3, tolerance: float = 1e-6) -> ResidualReport:
    """Residual of ``b^3 v'' + (b/3) v^3 - a v + C1`` on the inverted quadrature.

    ``v''`` comes from a five-point central difference of inverted samples.
    """
    qs = QuadratureSolution(a, b, C1, C2)
    lo, hi = qs.z_range()
    zs = np.random.default_rng(seed).uniform(lo + 2 * h, hi - 2 * h, size=n)

    def one(z):
        v = [qs.v_of(z + k * h) for k in (-2, -1, 0, 1, 2)]
        vpp = (-v[0] + 16 * v[1] - 30 * v[2] + 16 * v[3] - v[4]) / (12 * h * h)
        terms = [b**3 * vpp, b / 3 * v[2] ** 3, -a * v[2], C1]
        return sum(terms), max(abs(t) for t in terms)

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        out = list(ex.map(one, zs))
    res = np.array([abs(r) for r, _ in out])
    rel = np.array([abs(r) / (1 + s) for r, s in out])
    worst = int(np.argmax(rel))
    return ResidualReport(float(res.max()), float(rel.max()), n, 0, float(zs[worst]), tolerance)


def check_solution(sol: SolutionAnsatz, n: int = DEFAULT_SAMPLES, seed: int = 0) -> ResidualReport:
    """Dispatch on ``sol.kind``."""
    if sol.kind == "sn":
        p = sol.real_params()
        return check_sn_solution(p["c"], p["C1"], p["C2"], n, seed, sol.domain, sol.tolerance)
    if sol.kind == "quadrature":
        p = sol.real_params()
        return check_quadrature(p["a"], p["b"], p["C1"], p["C2"], min(n, 64), seed, tolerance=sol.tolerance)
    if sol.kind == "closed":
        return residual_sample(sol.equation, sol, n, seed)
    raise ValueError(f"unknown solution kind {sol.kind!r}")


__all__ = [
    "DomainError",
    "ResidualReport",
    "SolutionAnsatz",
    "check_quadrature",
    "check_sn_solution",
    "check_solution",
    "jacobi_sn",
    "residual_sample",
]
