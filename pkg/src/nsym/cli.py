"""``nsym`` command line: verify, classify, reduce, check, transform.

Every command emits a JSON report with a ``schema_version``.  Exit codes:
0 success, 1 verification failure, 2 input error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import sympy as sp

from nsym import dde
from nsym.catalog import catalog_entry, generator_to_dsl
from nsym.expr import StructuralError
from nsym.numeric import DomainError, check_solution
from nsym.parser import ParseError, parse_document, parse_expression
from nsym.printing import dsl_str
from nsym.reduction import ReductionFailure, run_reduction
from nsym.symmetry import bracket_table, classify_ansatz, verify_symmetry
from nsym.system import EquationSystem

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class UsageError(Exception):
    pass


class _Inputs:
    """Reads input files once and records their hashes."""

    def __init__(self):
        self.hashes: dict[str, str] = {}
        self.last: str | None = None

    def read(self, name: str) -> str:
        path = Path(name)
        try:
            data = path.read_bytes()
        except OSError as exc:
            raise UsageError(f"cannot read {name}: {exc.strerror}") from None
        self.hashes[name] = hashlib.sha256(data).hexdigest()
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError:
            raise UsageError(f"{name} is not UTF-8") from None

    def document(self, name: str):
        text = self.read(name)
        self.last = name
        return parse_document(text)


def _float(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


# -- commands -----------------------------------------------------------------------

def cmd_verify(args, inp: _Inputs) -> tuple[dict, int]:
    system = inp.document(args.system).system()
    gens = []
    for f in args.generators:
        gens += inp.document(f).generators
    if not gens:
        raise UsageError("no generators given")
    verdicts = []
    for g in gens:
        missing = set(system.axes) - set(g.xi) or set(system.deps) - set(g.phi)
        if missing:
            raise UsageError(f"generator {g.name!r} lacks components for {sorted(missing)}")
        v = verify_symmetry(system, g)
        verdicts.append({
            "generator": g.name,
            "verified": v.is_symmetry,
            "residuals": [] if v.is_symmetry else [dsl_str(r) for r in v.residuals],
        })
    ok = all(v["verified"] for v in verdicts)
    return {"verdicts": verdicts, "all_verified": ok}, EXIT_OK if ok else EXIT_FAIL


def cmd_classify(args, inp: _Inputs) -> tuple[dict, int]:
    system = inp.document(args.system).system()
    real_fields = True if args.real_fields else None
    cl = classify_ansatz(system, args.degree, real_fields)
    out = {
        "degree": args.degree,
        "real_fields": cl.real_fields,
        "dimension": cl.dimension,
        "unknowns": len(cl.ansatz.unknowns),
        "determining_equations": len(cl.determining.equations),
        "basis": [{"name": g.name, "dsl": generator_to_dsl(g)} for g in cl.basis],
    }
    if not args.no_brackets:
        table = bracket_table(system, cl.basis)
        out["brackets"] = [
            {"i": cl.basis[i].name, "j": cl.basis[j].name, "bracket": generator_to_dsl(b), "is_symmetry": ok}
            for i, j, b, ok in table
        ]
        out["closure"] = {"pairs": len(table), "failures": sum(not r[3] for r in table)}
    return out, EXIT_OK


def cmd_reduce(args, inp: _Inputs) -> tuple[dict, int]:
    if (args.entry is None) == (args.spec is None):
        raise UsageError("give exactly one of --entry or --spec")
    if args.entry is not None:
        try:
            entry = catalog_entry(args.entry)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
        system = inp.document(args.system).system() if args.system else entry.system
        spec = entry.spec
    else:
        doc = inp.document(args.spec)
        if not doc.reductions:
            raise UsageError(f"{args.spec} contains no reduction")
        spec = doc.reductions[0]
        if args.system:
            system = inp.document(args.system).system()
        elif doc.equations:
            system = doc.system()
        else:
            raise UsageError("a system file is needed with --spec")
    outcome = run_reduction(system, spec)
    out = {
        "entry": spec.name,
        "ode": dsl_str(outcome.ode.expr),
        "local": outcome.ode.local,
        "nonlocal": not outcome.ode.local,
        "matches_expected": outcome.matches,
        "stages": [
            {"kind": s.kind, "ode": dsl_str(s.ode.expr), "var": s.ode.var, "matches_expected": s.matches}
            for s in outcome.stages
        ],
        "final": dsl_str(outcome.final.expr),
    }
    return out, EXIT_OK if outcome.ok else EXIT_FAIL


def cmd_check(args, inp: _Inputs) -> tuple[dict, int]:
    doc = inp.document(args.solution)
    if not doc.solutions:
        raise UsageError(f"{args.solution} contains no solution block")
    if args.samples < 1:
        raise UsageError("--samples must be positive")
    results = []
    for sol in doc.solutions:
        rep = check_solution(sol, args.samples, args.seed)
        d = {k: (_float(v) if isinstance(v, float) else v) for k, v in rep.to_dict().items()}
        d["name"] = sol.name
        results.append(d)
    ok = all(r["passed"] for r in results)
    return {"solutions": results, "all_passed": ok}, EXIT_OK if ok else EXIT_FAIL


def _assignments(text: str | None, axes) -> dict[str, sp.Expr] | sp.Expr | None:
    """``"i*pi"`` (all axes) or ``"x=i*pi,t=1"``."""
    if text is None:
        return None
    if "=" not in text:
        return parse_expression(text, (), (), ())
    out = {}
    for part in text.split(","):
        name, _, value = part.partition("=")
        name = name.strip()
        if name not in axes:
            raise UsageError(f"{name!r} is not an independent variable")
        out[name] = parse_expression(value, (), (), ())
    return out


def _check_scale(scale, axes):
    values = scale.values() if isinstance(scale, dict) else [scale]
    for v in values:
        if v.free_symbols:
            raise UsageError("scale factors must be numeric constants")
        if v == 0:
            raise UsageError("zero rescale factor")


def cmd_transform(args, inp: _Inputs) -> tuple[dict, int]:
    system = inp.document(args.system).system()
    steps = []
    exp_axes = [a.strip() for a in args.exp.split(",")] if args.exp else []
    for a in exp_axes:
        if a not in system.axes:
            raise UsageError(f"{a!r} is not an independent variable")
    if args.map:
        scale = _assignments(args.map, system.axes)
        _check_scale(scale, system.axes)
        system = dde.complex_affine_map(system, scale)
        steps.append(f"map {args.map}")
    if exp_axes:
        system = dde.exp_substitute(system, exp_axes)
        steps.append(f"exp {','.join(exp_axes)}")
    units = {a: sp.S.One for a in system.axes}
    if args.rescale:
        scale = _assignments(args.rescale, system.axes)
        _check_scale(scale, system.axes)
        system = dde.rescale(system, scale)
        units = {a: (scale.get(a, sp.S.One) if isinstance(scale, dict) else scale) for a in system.axes}
        steps.append(f"rescale {args.rescale}")
    if args.normalize:
        eqs = {}
        for name, e in system.equations.items():
            for a in exp_axes:
                e = dde.strip_common_exp(e, a, units[a])[0]
            eqs[name] = e
        system = EquationSystem(system.axes, system.deps, eqs, {}, system.real_deps)
        steps.append("normalize")
    out = {
        "steps": steps,
        "equations": {k: dsl_str(v) for k, v in system.equations.items()},
    }
    code = EXIT_OK
    if args.expect:
        expected = inp.document(args.expect).system()
        if len(expected.equations) != len(system.equations):
            raise UsageError("expected file has a different number of equations")
        comps = []
        for (name, got), exp in zip(system.equations.items(), expected.equations.values()):
            ratio = dde.proportionality(got, exp)
            comps.append({
                "equation": name,
                "matches": ratio is not None,
                "exact": ratio == 1,
                "factor": None if ratio is None else dsl_str(ratio),
            })
        out["comparison"] = comps
        if not all(c["matches"] for c in comps):
            code = EXIT_FAIL
    return out, code


# -- driver -------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nsym", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--seed", type=int, default=0)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="check generators against a system")
    v.add_argument("system")
    v.add_argument("generators", nargs="*")
    v.set_defaults(run=cmd_verify)

    c = sub.add_parser("classify", parents=[common], help="solve the polynomial determining system")
    c.add_argument("system")
    c.add_argument("--degree", type=int, default=2)
    c.add_argument("--real-fields", action="store_true", help="restrict to real coefficient fields")
    c.add_argument("--no-brackets", action="store_true", help="skip the Lie bracket table")
    c.set_defaults(run=cmd_classify)

    r = sub.add_parser("reduce", parents=[common], help="apply a symmetry reduction")
    r.add_argument("system", nargs="?")
    r.add_argument("--entry", help="built-in catalog entry")
    r.add_argument("--spec", help="file with a reduction block")
    r.set_defaults(run=cmd_reduce)

    k = sub.add_parser("check", parents=[common], help="sample residuals of candidate solutions")
    k.add_argument("solution")
    k.add_argument("--samples", type=int, default=256)
    k.set_defaults(run=cmd_check)

    t = sub.add_parser("transform", parents=[common], help="exponential map, rescaling, affine map")
    t.add_argument("system")
    t.add_argument("--exp", help="comma separated axes for x = exp(X)")
    t.add_argument("--rescale", help="factor for all axes, or x=s,t=s")
    t.add_argument("--map", help="affine map x = s X with s real or imaginary, e.g. x=i,t=-1")
    t.add_argument("--normalize", action="store_true", help="divide out the common exponential")
    t.add_argument("--expect", help="compare with this system up to a constant factor")
    t.set_defaults(run=cmd_transform)
    return p


def _emit(report: dict, out: str | None):
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    inp = _Inputs()
    start = time.perf_counter()
    report = {"schema_version": SCHEMA_VERSION, "command": args.command, "seed": args.seed}
    try:
        body, code = args.run(args, inp)
        report.update(body)
        report["status"] = "ok" if code == EXIT_OK else "failed"
    except ParseError as exc:
        code = EXIT_INPUT
        report["status"] = "error"
        report["error"] = {"kind": "parse", "message": exc.message,
                           "line": exc.span.line, "column": exc.span.column,
                           "file": inp.last}
        print(f"{report['error']['file']}:{exc.span}: {exc.message}", file=sys.stderr)
    except (UsageError, DomainError, StructuralError, ReductionFailure, ValueError) as exc:
        code = EXIT_INPUT
        report["status"] = "error"
        report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
        print(f"nsym {args.command}: {exc}", file=sys.stderr)
    report["inputs"] = inp.hashes
    report["wall_time"] = round(time.perf_counter() - start, 6)
    _emit(report, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
