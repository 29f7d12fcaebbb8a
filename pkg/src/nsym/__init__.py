"""Lie point symmetries, reductions and DDE transforms for nonlocal PDEs."""
from nsym.expr import (
    Jet,
    JetCoordinate,
    StructuralError,
    canonicalize,
    conjugate,
    eval_numeric,
    reflect,
    substitute,
    total_derivative,
)
from nsym.parser import ParseError, parse_document, parse_expression, parse_generator, parse_system
from nsym.printing import dsl_str
from nsym.system import EquationSystem, Generator
from nsym.symmetry import classify_ansatz, lie_bracket, prolong, realify, verify_symmetry
from nsym.reduction import ReductionSpec, apply_reduction, compare_canonical, run_reduction
from nsym.numeric import check_solution, residual_sample
from nsym.dde import exp_substitute, rescale, traveling_dde

__version__ = "0.1.0"
