"""Jacobi elliptic functions sn, cn, dn for a real parameter 0 <= m <= 1.

Computed with the arithmetic-geometric mean (descending Landen) scheme:
forward AGM iteration down to a negligible ``c_n``, then the backward
amplitude recursion.  The second argument is always the parameter
``m = k**2``.
"""
from __future__ import annotations

import math

import numpy as np
import sympy as sp

_TOL = 1e-15
_MAX_ITER = 64


def _check_m(m: float) -> float:
    m = float(m)
    if not 0.0 <= m <= 1.0 or math.isnan(m):
        raise ValueError(f"parameter m={m} outside [0, 1]")
    return m


def _amplitude(u: float, m: float) -> float:
    a, b, c = 1.0, math.sqrt(1.0 - m), math.sqrt(m)
    cs = [c]
    as_ = [a]
    n = 0
    while abs(c) > _TOL:
        if n >= _MAX_ITER:
            raise ArithmeticError("AGM iteration did not converge")
        a, b, c = (a + b) / 2.0, math.sqrt(a * b), (a - b) / 2.0
        as_.append(a)
        cs.append(c)
        n += 1
    phi = (2.0 ** n) * a * u
    for k in range(n, 0, -1):
        phi = (phi + math.asin(cs[k] / as_[k] * math.sin(phi))) / 2.0
    return phi


def ellipj(u: float, m: float) -> tuple[float, float, float]:
    """Return ``(sn, cn, dn)`` at real ``u``."""
    m = _check_m(m)
    u = float(u)
    if m == 0.0:
        return math.sin(u), math.cos(u), 1.0
    if m == 1.0:
        s = 1.0 / math.cosh(u)
        return math.tanh(u), s, s
    phi = _amplitude(u, m)
    s, c = math.sin(phi), math.cos(phi)
    return s, c, math.sqrt(1.0 - m * s * s)


def jacobi_sn(u: float, m: float) -> float:
    return ellipj(u, m)[0]


def jacobi_cn(u: float, m: float) -> float:
    return ellipj(u, m)[1]


def jacobi_dn(u: float, m: float) -> float:
    return ellipj(u, m)[2]


def quarter_period(m: float) -> float:
    """Complete elliptic integral K(m) via the AGM."""
    m = _check_m(m)
    if m == 1.0:
        return math.inf
    a, b = 1.0, math.sqrt(1.0 - m)
    while abs(a - b) > _TOL * a:
        a, b = (a + b) / 2.0, math.sqrt(a * b)
    return math.pi / (2.0 * a)


def _vectorize(index: int):
    def f(u, m):
        u_arr = np.asarray(u)
        m_arr = np.asarray(m)
        out = np.empty(np.broadcast(u_arr, m_arr).shape, dtype=float)
        for idx, (uu, mm) in enumerate(np.broadcast(u_arr, m_arr)):
            if abs(np.imag(uu)) > 1e-14 or abs(np.imag(mm)) > 1e-14:
                raise ValueError("complex arguments are outside the supported range")
            out.flat[idx] = ellipj(float(np.real(uu)), float(np.real(mm)))[index]
        return out if out.shape else out.item()

    return f


sn_vec = _vectorize(0)
cn_vec = _vectorize(1)
dn_vec = _vectorize(2)


class sn(sp.Function):
    """Symbolic ``sn(u, m)``."""

    nargs = 2

    @classmethod
    def eval(cls, u, m):
        if u.is_zero:
            return sp.S.Zero
        if m.is_zero:
            return sp.sin(u)

    def fdiff(self, argindex=1):
        if argindex != 1:
            raise sp.ArgumentIndexError(self, argindex)
        u, m = self.args
        return cn(u, m) * dn(u, m)


class cn(sp.Function):
    nargs = 2

    @classmethod
    def eval(cls, u, m):
        if u.is_zero:
            return sp.S.One
        if m.is_zero:
            return sp.cos(u)

    def fdiff(self, argindex=1):
        if argindex != 1:
            raise sp.ArgumentIndexError(self, argindex)
        u, m = self.args
        return -sn(u, m) * dn(u, m)


class dn(sp.Function):
    nargs = 2

    @classmethod
    def eval(cls, u, m):
        if u.is_zero or m.is_zero:
            return sp.S.One

    def fdiff(self, argindex=1):
        if argindex != 1:
            raise sp.ArgumentIndexError(self, argindex)
        u, m = self.args
        return -m * sn(u, m) * cn(u, m)
