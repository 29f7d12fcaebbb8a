"""Plain-text printer producing DSL that the parser reads back."""
from __future__ import annotations

import sympy as sp
from sympy.printing.str import StrPrinter


class DslPrinter(StrPrinter):
    def _print_Jet(self, expr):
        return expr.coord.label()

    def _print_Symbol(self, expr):
        if hasattr(expr, "coord"):
            return expr.coord.label()
        return expr.name

    def _print_ImaginaryUnit(self, expr):
        return "i"

    def _print_Exp1(self, expr):
        return "exp(1)"

    def _print_Pi(self, expr):
        return "pi"

    def _print_Abs(self, expr):
        return f"abs({self._print(expr.args[0])})"

    def _print_Pow(self, expr, rational=False):
        b, e = expr.as_base_exp()
        if e.is_Rational and e.q == 2 and abs(e.p) > 1:
            inner = f"sqrt({self._print(b)})^{abs(e.p)}"
            return inner if e.p > 0 else f"1/{inner}"
        return super()._print_Pow(expr, rational).replace("**", "^")

    def _print_Rational(self, expr):
        return f"{expr.p}/{expr.q}"

    def _print_Mul(self, expr):
        return super()._print_Mul(expr).replace("**", "^")


_printer = DslPrinter({"order": "lex"})


def dsl_str(e) -> str:
    """Render an expression as DSL text."""
    return _printer.doprint(sp.sympify(e))
