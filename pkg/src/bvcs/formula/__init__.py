"""Formula lexing, parsing, reference extraction and evaluation."""

from .evaluator import Evaluator, cyclic_cells, evaluate_cell, formula_dependencies, recompute_all
from .nodes import Binary, Call, Literal, Name, Node, RangeRef, Ref, Unary
from .parser import parse_formula, tokenize
from .refs import RefSet, extract_refs

__all__ = [
    "Binary",
    "Call",
    "Evaluator",
    "Literal",
    "Name",
    "Node",
    "RangeRef",
    "Ref",
    "RefSet",
    "Unary",
    "cyclic_cells",
    "evaluate_cell",
    "extract_refs",
    "formula_dependencies",
    "parse_formula",
    "recompute_all",
    "tokenize",
]
