"""Shipped systems, generators and reductions, plus DSL serialization."""
from __future__ import annotations

from dataclasses import dataclass
from importlib.resources import files

from nsym.parser import Document, parse_document
from nsym.printing import dsl_str
from nsym.reduction import ReductionSpec
from nsym.system import EquationSystem, Generator

DATA = files("nsym") / "data"


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    system: EquationSystem
    spec: ReductionSpec
    source: str


def data_text(name: str) -> str:
    return (DATA / name).read_text(encoding="utf-8")


def load_system(name: str) -> EquationSystem:
    """``nls``, ``nls-real`` or ``mkdv``."""
    return parse_document(data_text(f"{name}.nsym")).system()


def load_generators(name: str) -> list[Generator]:
    return parse_document(data_text(f"{name}-generators.nsym")).generators


def _system_for(entry_name: str) -> str:
    return "nls" if entry_name.startswith("nls") else "mkdv"


def builtin_catalog() -> list[CatalogEntry]:
    out = []
    for path in sorted((DATA / "reductions").iterdir(), key=lambda p: p.name):
        if not path.name.endswith(".nsym"):
            continue
        text = path.read_text(encoding="utf-8")
        for spec in parse_document(text).reductions:
            out.append(CatalogEntry(spec.name, load_system(_system_for(spec.name)), spec, text))
    return out


def catalog_entry(name: str) -> CatalogEntry:
    for e in builtin_catalog():
        if e.name == name:
            return e
    raise KeyError(f"unknown catalog entry {name!r}")


# -- serialization ----------------------------------------------------------------

def _mask_text(axes, mask) -> str:
    return "(" + ",".join(("-" if i in mask else "") + a for i, a in enumerate(axes)) + ")"


def header_to_dsl(system: EquationSystem) -> str:
    lines = [f"vars {', '.join(system.axes)};", f"deps {', '.join(system.deps)};"]
    real = [d for d in system.deps if d in system.real_deps]
    if real:
        lines.append(f"real {', '.join(real)};")
    return "\n".join(lines)


def system_to_dsl(system: EquationSystem) -> str:
    lines = [header_to_dsl(system)]
    for name, e in system.equations.items():
        lines.append(f"eq {name}: {dsl_str(e)} = 0;")
        lead = system.leading.get(name)
        if lead is not None:
            lines.append(f"solve {lead.label()} from {name};")
    return "\n".join(lines) + "\n"


def generator_to_dsl(g: Generator, name: str | None = None) -> str:
    name = g.name if name is None else name
    parts = [f"xi_{a}: {dsl_str(v)};" for a, v in g.xi.items()]
    parts += [f"phi_{d}: {dsl_str(v)};" for d, v in g.phi.items()]
    head = f"gen {name} " if name else "gen "
    return head + "{ " + " ".join(parts) + " }"


def spec_to_dsl(spec: ReductionSpec, system: EquationSystem) -> str:
    """Reduction block that parses back to an equivalent spec."""
    axes = system.axes
    lines = [f"reduction {spec.name} {{",
             f"  var {spec.var}; dep {spec.dep}{' real' if spec.dep_real else ''};",
             f"  invariant: {dsl_str(spec.invariant)};",
             f"  multiplier: {dsl_str(spec.multiplier)};"]
    for k, v in spec.constraints.items():
        lines.append(f"  constrain {k}: {dsl_str(v)};")
    for p in spec.positive:
        lines.append(f"  positive: {dsl_str(p)};")
    if spec.chart is not None:
        lines.append(f"  chart {spec.chart[0]}: {dsl_str(spec.chart[1])};")
    for mask, par in spec.parity.items():
        lines.append(f"  parity {_mask_text(axes, mask)}: {par};")
    for mask, a in spec.reflected_multiplier.items():
        lines.append(f"  reflected_multiplier {_mask_text(axes, mask)}: {dsl_str(a)};")
    for f in spec.nonvanishing:
        lines.append(f"  nonvanishing: {dsl_str(f)};")
    if spec.expected is not None:
        lines.append(f"  expect: {dsl_str(spec.expected)};")
    for st in spec.stages:
        if st.kind == "integrate":
            lines.append(f"  integrate {st.arg}: {dsl_str(st.expected)};")
        else:
            z, mapping = st.arg
            lines.append(f"  change {z}: {spec.var} = {dsl_str(mapping)} -> {dsl_str(st.expected)};")
    lines.append("}")
    return header_to_dsl(system) + "\n" + "\n".join(lines) + "\n"


def document_of(text: str) -> Document:
    return parse_document(text)
