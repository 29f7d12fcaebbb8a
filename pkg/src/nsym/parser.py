"""Recursive-descent parser for ``.nsym`` files.

See ``docs/grammar.md`` for the EBNF.  Every file starts with declarations::

    vars x, t;
    deps q;

Identifiers that are neither declared variables nor dependents nor reserved
words are parameters.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import sympy as sp

from nsym import elliptic
from nsym.expr import Jet, JetCoordinate, StructuralError, base_var, canonicalize, conjugate, param
from nsym.system import EquationSystem, Generator


@dataclass(frozen=True)
class SourceSpan:
    begin: int
    end: int
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class ParseError(ValueError):
    def __init__(self, message: str, span: SourceSpan):
        super().__init__(f"{span}: {message}")
        self.message = message
        self.span = span


FUNCTIONS = {
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "sin": sp.sin,
    "cos": sp.cos,
    "sech": sp.sech,
    "abs": sp.Abs,
    "sn": elliptic.sn,
    # companions of sn; they appear in derivatives of sn
    "cn": elliptic.cn,
    "dn": elliptic.dn,
}
ARITY = {"sn": 2, "cn": 2, "dn": 2}
RESERVED = set(FUNCTIONS) | {"i", "pi", "conj", "D"}

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>->|[-+*/^()\[\]{},;:=@])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    span: SourceSpan


def _span(text: str, begin: int, end: int) -> SourceSpan:
    line = text.count("\n", 0, begin) + 1
    col = begin - (text.rfind("\n", 0, begin) + 1) + 1
    return SourceSpan(begin, end, line, col)


def tokenize(text: str) -> list[Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", _span(text, pos, pos + 1))
        kind = m.lastgroup
        if kind != "ws":
            out.append(Token(kind, m.group(), _span(text, m.start(), m.end())))
        pos = m.end()
    out.append(Token("eof", "", _span(text, len(text), len(text))))
    return out


@dataclass
class Document:
    axes: tuple[str, ...] = ()
    deps: tuple[str, ...] = ()
    real_deps: set[str] = field(default_factory=set)
    equations: dict[str, sp.Expr] = field(default_factory=dict)
    leading: dict[str, JetCoordinate] = field(default_factory=dict)
    generators: list[Generator] = field(default_factory=list)
    reductions: list = field(default_factory=list)
    solutions: list = field(default_factory=list)

    def system(self) -> EquationSystem:
        return EquationSystem(self.axes, self.deps, dict(self.equations), dict(self.leading),
                              frozenset(self.real_deps))


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.axes: list[str] = []
        self.dep_axes: dict[str, tuple[str, ...]] = {}
        self.real: set[str] = set()

    # -- token helpers --------------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        return ParseError(msg, tok.span)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "ident")

    def accept(self, text: str) -> Token | None:
        if self.at(text):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        return t

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def name(self) -> str:
        """Identifier possibly joined by hyphens, e.g. ``nls-local``."""
        parts = [self.ident().text]
        while self.at("-") and self.peek().kind in ("ident", "num"):
            self.i += 1
            parts.append(self.tok.text)
            self.i += 1
        return "-".join(parts)

    def id_list(self) -> list[str]:
        names = [self.ident().text]
        while self.accept(","):
            names.append(self.ident().text)
        return names

    # -- expressions ----------------------------------------------------------
    def expr(self) -> sp.Expr:
        e = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self) -> sp.Expr:
        e = self.unary()
        while self.tok.text in ("*", "/") and self.tok.kind == "op":
            op = self.tok.text
            tok = self.tok
            self.i += 1
            rhs = self.unary()
            if op == "*":
                e = e * rhs
            else:
                if rhs == 0:
                    raise self.error("division by zero", tok)
                e = e / rhs
        return e

    def unary(self) -> sp.Expr:
        if self.accept("-"):
            return -self.unary()
        if self.accept("+"):
            return self.unary()
        return self.power()

    def power(self) -> sp.Expr:
        base = self.postfix()
        if self.at("^"):
            tok = self.tok
            self.i += 1
            exponent = self.unary()
            if not exponent.is_Rational:
                raise self.error("exponent must be an integer or rational constant", tok)
            return base ** exponent
        return base

    def postfix(self) -> sp.Expr:
        start = self.tok
        e = self.atom()
        if self.at("@"):
            if not isinstance(e, Jet) or not e.coord.is_base:
                raise self.error("'@' applies only to dependent variables and their derivatives", start)
            self.i += 1
            e = self.argument_suffix(e)
        return e

    def argument_suffix(self, s: Jet) -> Jet:
        c = s.coord
        if self.accept("shift"):
            self.expect("(")
            shifts = []
            for k, axis in enumerate(c.axes):
                if k:
                    self.expect(",")
                tok = self.tok
                arg = self.expr()
                d = sp.nsimplify(arg - base_var(axis))
                if d.free_symbols:
                    raise self.error(f"shift argument must be {axis} plus a constant", tok)
                shifts.append(d)
            self.expect(")")
            return Jet(JetCoordinate(c.dep, c.axes, c.orders, c.mask, c.conj, c.real, tuple(shifts)))
        self.expect("(")
        mask = set()
        for k, axis in enumerate(c.axes):
            if k:
                self.expect(",")
            tok = self.tok
            arg = self.expr()
            v = base_var(axis)
            if arg == -v:
                mask.add(k)
            elif arg != v:
                raise self.error(f"argument {k + 1} must be {axis} or -{axis}", tok)
        self.expect(")")
        return Jet(c.reflected(mask))

    def atom(self) -> sp.Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return sp.Rational(tok.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if tok.kind != "ident":
            raise self.error(f"unexpected {tok.text or 'end of input'!r}")
        self.i += 1
        name = tok.text
        if name == "i":
            return sp.I
        if name == "pi":
            return sp.pi
        if name == "D":
            return self.derivative(tok)
        if name == "conj":
            self.expect("(")
            e = self.expr()
            self.expect(")")
            return conjugate(e)
        if name in FUNCTIONS:
            self.expect("(")
            args = [self.expr()]
            while self.accept(","):
                args.append(self.expr())
            self.expect(")")
            if len(args) != ARITY.get(name, 1):
                raise self.error(f"{name} takes {ARITY.get(name, 1)} argument(s)", tok)
            return FUNCTIONS[name](*args)
        if self.at("("):
            raise self.error(f"unknown function {name!r}", tok)
        if name in self.axes:
            return base_var(name)
        if name in self.dep_axes:
            return self.dep_jet(name, ())
        return param(name)

    def dep_jet(self, dep: str, diff) -> Jet:
        axes = self.dep_axes[dep]
        orders = tuple(list(diff).count(a) for a in axes)
        return Jet(JetCoordinate(dep, axes, orders, frozenset(), False, dep in self.real))

    def derivative(self, start: Token) -> Jet:
        self.expect("[")
        dtok = self.ident()
        if dtok.text not in self.dep_axes:
            raise self.error(f"unknown dependent variable {dtok.text!r}", dtok)
        axes = self.dep_axes[dtok.text]
        diff = []
        while self.accept(","):
            atok = self.ident()
            if atok.text not in axes:
                raise self.error(f"unknown variable {atok.text!r} for {dtok.text}", atok)
            diff.append(atok.text)
        self.expect("]")
        return self.dep_jet(dtok.text, diff)

    # -- statements -----------------------------------------------------------
    def document(self) -> Document:
        doc = Document()
        while self.tok.kind != "eof":
            tok = self.tok
            kw = self.ident().text
            if kw == "vars":
                names = self.id_list()
                self._check_new(names, tok)
                self.axes.extend(names)
                doc.axes = tuple(self.axes)
                self.expect(";")
            elif kw == "deps":
                names = self.id_list()
                self._check_new(names, tok)
                if not self.axes:
                    raise self.error("'deps' must follow 'vars'", tok)
                for n in names:
                    self.dep_axes[n] = tuple(self.axes)
                doc.deps = doc.deps + tuple(names)
                self.expect(";")
            elif kw == "real":
                names = self.id_list()
                for n in names:
                    if n not in self.dep_axes:
                        raise self.error(f"unknown dependent variable {n!r}", tok)
                self.real.update(names)
                doc.real_deps.update(names)
                self.expect(";")
            elif kw == "eq":
                name = self.name()
                self.expect(":")
                lhs = self.expr()
                if self.accept("="):
                    lhs = lhs - self.expr()
                self.expect(";")
                doc.equations[name] = canonicalize(lhs)
            elif kw == "solve":
                jtok = self.tok
                s = self.postfix()
                if not isinstance(s, Jet):
                    raise self.error("expected a derivative after 'solve'", jtok)
                self.expect("from")
                etok = self.tok
                ename = self.name()
                if ename not in doc.equations:
                    raise self.error(f"unknown equation {ename!r}", etok)
                self.expect(";")
                from nsym.system import validate_leading

                try:
                    validate_leading(doc.equations[ename], s.coord)
                except StructuralError as exc:
                    raise self.error(str(exc), jtok) from None
                doc.leading[ename] = s.coord
            elif kw == "gen":
                doc.generators.append(self.generator(tok))
            elif kw == "reduction":
                doc.reductions.append(self.reduction(tok))
            elif kw == "solution":
                doc.solutions.append(self.solution(tok))
            else:
                raise self.error(f"unknown statement {kw!r}", tok)
        return doc

    def _check_new(self, names, tok):
        for n in names:
            if n in RESERVED:
                raise self.error(f"{n!r} is reserved", tok)
            if n in self.axes or n in self.dep_axes:
                raise self.error(f"{n!r} declared twice", tok)

    def generator(self, start: Token) -> Generator:
        name = self.name() if self.tok.kind == "ident" else ""
        self.expect("{")
        xi, phi = {}, {}
        while not self.accept("}"):
            ktok = self.ident()
            key = ktok.text
            self.expect(":")
            etok = self.tok
            value = canonicalize(self.expr())
            self.expect(";")
            for s in value.free_symbols:
                if isinstance(s, Jet) and (s.coord.order or s.coord.mask or s.coord.shift is not None):
                    raise self.error("generator components may depend only on base variables and "
                                     "undifferentiated dependents", etok)
            if key.startswith("xi_") and key[3:] in self.axes:
                xi[key[3:]] = value
            elif key.startswith("phi_") and key[4:] in self.dep_axes:
                phi[key[4:]] = value
            else:
                raise self.error(f"unknown generator component {key!r}", ktok)
        missing = [f"xi_{a}" for a in self.axes if a not in xi]
        missing += [f"phi_{d}" for d in self.dep_axes if d not in phi and self.dep_axes[d] == tuple(self.axes)]
        if missing:
            raise self.error("missing generator components: " + ", ".join(missing), start)
        return Generator({a: xi[a] for a in self.axes}, {d: phi[d] for d in phi}, name)

    def _mask_spec(self, axes) -> frozenset[int]:
        self.expect("(")
        mask = set()
        for k, axis in enumerate(axes):
            if k:
                self.expect(",")
            neg = bool(self.accept("-"))
            atok = self.ident()
            if atok.text != axis:
                raise self.error(f"expected {axis}", atok)
            if neg:
                mask.add(k)
        self.expect(")")
        return frozenset(mask)

    def reduction(self, start: Token):
        from nsym.reduction import ReductionSpec, Stage

        name = self.name()
        self.expect("{")
        fields: dict = {"parity": {}, "reflected_multiplier": {}, "constraints": {},
                        "stages": [], "nonvanishing": [], "positive": []}
        saved_axes = list(self.axes)
        saved_deps = dict(self.dep_axes)
        saved_real = set(self.real)
        try:
            while not self.accept("}"):
                ktok = self.ident()
                kw = ktok.text
                if kw == "var":
                    fields["var"] = self.ident().text
                    self.axes.append(fields["var"])
                elif kw == "dep":
                    fields["dep"] = self.ident().text
                    if self.accept("real"):
                        fields["dep_real"] = True
                        self.real.add(fields["dep"])
                    if "var" not in fields:
                        raise self.error("'dep' must follow 'var'", ktok)
                    self.dep_axes[fields["dep"]] = (fields["var"],)
                elif kw == "invariant":
                    self.expect(":")
                    fields["invariant"] = self.expr()
                elif kw == "multiplier":
                    self.expect(":")
                    fields["multiplier"] = self.expr()
                elif kw == "chart":
                    v = self.ident().text
                    self.expect(":")
                    fields["chart"] = (v, self.expr())
                elif kw == "parity":
                    mask = self._mask_spec(saved_axes)
                    self.expect(":")
                    ptok = self.ident()
                    if ptok.text not in ("even", "odd", "fixed"):
                        raise self.error("parity must be even, odd or fixed", ptok)
                    fields["parity"][mask] = ptok.text
                elif kw == "reflected_multiplier":
                    mask = self._mask_spec(saved_axes)
                    self.expect(":")
                    fields["reflected_multiplier"][mask] = self.expr()
                elif kw == "constrain":
                    p = self.ident().text
                    self.expect(":")
                    fields["constraints"][p] = self.expr()
                elif kw == "nonvanishing":
                    self.expect(":")
                    fields["nonvanishing"].append(self.expr())
                elif kw == "positive":
                    self.expect(":")
                    fields["positive"].append(self.expr())
                elif kw == "expect":
                    self.expect(":")
                    fields["expected"] = canonicalize(self.expr())
                elif kw == "integrate":
                    const = self.ident().text
                    self.expect(":")
                    fields["stages"].append(Stage("integrate", const, canonicalize(self.expr())))
                elif kw == "change":
                    # change z: y = g(z) -> expected ODE in z
                    znew = self.ident().text
                    self.expect(":")
                    ytok = self.ident()
                    if ytok.text != fields.get("var"):
                        raise self.error("change must rewrite the reduced variable", ytok)
                    if znew in self.axes:
                        raise self.error(f"{znew!r} already declared", ktok)
                    self.expect("=")
                    self.axes.append(znew)
                    mapping = self.expr()
                    self.dep_axes[fields["dep"]] = (znew,)
                    self.expect("->")
                    fields["stages"].append(Stage("change", (znew, mapping), canonicalize(self.expr())))
                else:
                    raise self.error(f"unknown reduction field {kw!r}", ktok)
                self.expect(";")
        finally:
            self.axes = saved_axes
            self.dep_axes = saved_deps
            self.real = saved_real
        for req in ("var", "dep", "invariant", "multiplier"):
            if req not in fields:
                raise self.error(f"reduction {name!r} lacks '{req}'", start)
        return ReductionSpec(name=name, **fields)

    def solution(self, start: Token):
        from nsym.numeric import SolutionAnsatz

        name = self.name()
        self.expect("{")
        fields: dict = {"params": {}}
        saved_axes = list(self.axes)
        saved_deps = dict(self.dep_axes)
        saved_real = set(self.real)
        try:
            while not self.accept("}"):
                ktok = self.ident()
                kw = ktok.text
                if kw == "var":
                    fields["var"] = self.ident().text
                    self.axes.append(fields["var"])
                elif kw == "dep":
                    fields["dep"] = self.ident().text
                    if self.accept("real"):
                        self.real.add(fields["dep"])
                    self.dep_axes[fields["dep"]] = (fields.get("var", "y"),)
                elif kw == "kind":
                    self.expect(":")
                    fields["kind"] = self.ident().text
                elif kw == "equation":
                    self.expect(":")
                    fields["equation"] = canonicalize(self.expr())
                elif kw == "field":
                    self.expect(":")
                    fields["closed_form"] = self.expr()
                elif kw == "param":
                    p = self.ident().text
                    self.expect("=")
                    fields["params"][p] = self.expr()
                elif kw == "domain":
                    self.expect(":")
                    self.expect("[")
                    lo = self.expr()
                    self.expect(",")
                    hi = self.expr()
                    self.expect("]")
                    fields["domain"] = (float(lo), float(hi))
                elif kw == "tolerance":
                    self.expect(":")
                    fields["tolerance"] = float(self.expr())
                else:
                    raise self.error(f"unknown solution field {kw!r}", ktok)
                self.expect(";")
        finally:
            self.axes = saved_axes
            self.dep_axes = saved_deps
            self.real = saved_real
        return SolutionAnsatz(name=name, **fields)


def parse_document(text: str) -> Document:
    return _Parser(text).document()


def _expression_parser(text: str, axes, deps, real) -> _Parser:
    p = _Parser(text)
    p.axes = list(axes)
    p.dep_axes = {d: tuple(axes) for d in deps}
    p.real = set(real)
    return p


def parse_expression(text: str, axes=("x", "t"), deps=("q",), real=()) -> sp.Expr:
    """Parse a bare expression in the given variable context."""
    p = _expression_parser(text, axes, deps, real)
    if p.tok.kind == "eof":
        raise p.error("empty expression")
    e = p.expr()
    if p.tok.kind != "eof":
        raise p.error(f"unexpected {p.tok.text!r}")
    return canonicalize(e)


def parse_system(text: str) -> EquationSystem:
    doc = parse_document(text)
    if not doc.equations:
        raise ParseError("empty system: no 'eq' statements", _span(text, 0, len(text)))
    return doc.system()


def parse_generator(text: str, axes=("x", "t"), deps=("q",), real=()) -> Generator:
    """Parse one ``gen { ... }`` block, with or without declarations."""
    if re.match(r"\s*(vars|deps)\b", text):
        doc = parse_document(text)
    else:
        p = _expression_parser(text, axes, deps, real)
        doc = Document(axes=tuple(axes), deps=tuple(deps))
        start = p.tok
        if p.ident().text != "gen":
            raise p.error("expected 'gen'", start)
        doc.generators.append(p.generator(start))
        if p.tok.kind != "eof":
            raise p.error(f"unexpected {p.tok.text!r}")
    if len(doc.generators) != 1:
        raise ParseError("expected exactly one generator", _span(text, 0, len(text)))
    return doc.generators[0]
