"""Memoised, dependency-ordered formula evaluation."""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

from ..address import CellAddress, address_to_a1
from ..values import CellValue, ErrorValue
from .coerce import RangeValue, compare, scalar, to_number, to_text
from .functions import BUILTINS
from .nodes import Binary, Call, Literal, Name, Node, RangeRef, Ref, Unary
from .refs import iter_references

if TYPE_CHECKING:
    from ..workbook import Workbook

_COMPARATORS = {
    "=": lambda c: c == 0,
    "<>": lambda c: c != 0,
    "<": lambda c: c < 0,
    "<=": lambda c: c <= 0,
    ">": lambda c: c > 0,
    ">=": lambda c: c >= 0,
}


def formula_dependencies(wb: Workbook) -> dict[CellAddress, tuple[CellAddress, ...]]:
    """Formula cell -> the formula cells it references (ranges expanded)."""
    cached = wb.analysis.get("deps")
    if cached is not None:
        return cached
    formula_at = {c.address for c in wb.formula_cells()}
    by_sheet: dict[str, list[CellAddress]] = {}
    for addr in formula_at:
        by_sheet.setdefault(addr.sheet, []).append(addr)
    deps = {}
    for cell in wb.formula_cells():
        found: dict[CellAddress, None] = {}
        for ref in iter_references(cell.ast):
            if isinstance(ref, Ref):
                if ref.address in formula_at:
                    found[ref.address] = None
                continue
            lo, hi = ref.start, ref.end
            for addr in by_sheet.get(ref.sheet, ()):
                if lo.col <= addr.col <= hi.col and lo.row <= addr.row <= hi.row:
                    found[addr] = None
        deps[cell.address] = tuple(sorted(found, key=CellAddress.sort_key))
    wb.analysis["deps"] = deps
    return deps


def cyclic_cells(wb: Workbook) -> frozenset[CellAddress]:
    """Cells lying on a reference cycle (non-trivial SCC or self reference)."""
    cached = wb.analysis.get("cyclic")
    if cached is not None:
        return cached
    deps = formula_dependencies(wb)
    index: dict[CellAddress, int] = {}
    low: dict[CellAddress, int] = {}
    on_stack: set[CellAddress] = set()
    stack: list[CellAddress] = []
    cyclic: set[CellAddress] = set()
    counter = 0
    for root in sorted(deps, key=CellAddress.sort_key):
        if root in index:
            continue
        work = [(root, iter(deps[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, children = work[-1]
            advanced = False
            for child in children:
                if child not in index:
                    index[child] = low[child] = counter
                    counter += 1
                    stack.append(child)
                    on_stack.add(child)
                    work.append((child, iter(deps[child])))
                    advanced = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                if len(component) > 1 or node in deps[node]:
                    cyclic.update(component)
    result = frozenset(cyclic)
    wb.analysis["cyclic"] = result
    return result


class Evaluator:
    """Evaluation cache for one workbook instance.

    Cells on a reference cycle evaluate to ``#CYCLE!``; everything else is
    computed once, dependencies first, so recursion depth stays bounded by
    formula nesting rather than chain length.
    """

    def __init__(self, wb: Workbook):
        self.wb = wb
        self.values: dict[CellAddress, CellValue] = {}
        self.in_progress: set[CellAddress] = set()
        self.diagnostics: list[tuple[CellAddress, str]] = []
        self._deps = formula_dependencies(wb)
        self._cyclic = cyclic_cells(wb)
        self._current: CellAddress | None = None

    def diagnose(self, message: str) -> None:
        self.diagnostics.append((self._current, message))

    def value(self, addr: CellAddress) -> CellValue:
        if addr in self.values:
            return self.values[addr]
        sheet = self.wb.sheets.get(addr.sheet.casefold())
        if sheet is None:
            return ErrorValue.REF
        cell = sheet.cells.get((addr.col, addr.row))
        if cell is None or not cell.is_formula:
            return None if cell is None else cell.value
        if addr in self.in_progress:
            return ErrorValue.CYCLE
        self._evaluate_dependencies(cell.address)
        return self._compute(cell.address)

    def _evaluate_dependencies(self, root: CellAddress) -> None:
        # iterative post-order over not-yet-computed formula dependencies
        seen = {root}
        work = [(root, iter(self._deps.get(root, ())))]
        while work:
            node, children = work[-1]
            for child in children:
                if child in seen or child in self.values or child in self._cyclic:
                    continue
                seen.add(child)
                work.append((child, iter(self._deps.get(child, ()))))
                break
            else:
                work.pop()
                if node != root:
                    self._compute(node)

    def _compute(self, addr: CellAddress) -> CellValue:
        if addr in self._cyclic:
            self.values[addr] = ErrorValue.CYCLE
            return ErrorValue.CYCLE
        cell = self.wb.sheet(addr.sheet).cells[(addr.col, addr.row)]
        outer = self._current
        self._current = addr
        self.in_progress.add(addr)
        try:
            result = scalar(self.argument(cell.ast))
        finally:
            self.in_progress.discard(addr)
            self._current = outer
        if result is None:
            result = 0.0  # a formula pointing at a blank shows 0
        elif isinstance(result, float) and not math.isfinite(result):
            result = ErrorValue.NUM
        self.values[addr] = result
        return result

    # expression evaluation

    def argument(self, node: Node) -> CellValue | RangeValue:
        if isinstance(node, Literal):
            return node.value
        if isinstance(node, Ref):
            return RangeValue(((self.value(node.address),),), from_ref=True)
        if isinstance(node, RangeRef):
            return RangeValue(
                tuple(
                    tuple(self.value(CellAddress(node.sheet, col, row)) for col in range(node.start.col, node.end.col + 1))
                    for row in range(node.start.row, node.end.row + 1)
                )
            )
        if isinstance(node, Binary):
            return self._binary(node)
        if isinstance(node, Unary):
            return self._unary(node)
        if isinstance(node, Call):
            fn = BUILTINS.get(node.name)
            if fn is None:
                self.diagnose(f"unknown function {node.name}")
                return ErrorValue.NAME
            return fn(self, node.args)
        if isinstance(node, Name):
            self.diagnose(f"unknown name {node.name}")
            return ErrorValue.NAME
        raise TypeError(f"unexpected node {node!r}")

    def operand(self, node: Node) -> CellValue:
        return scalar(self.argument(node))

    def _unary(self, node: Unary) -> CellValue:
        v = self.operand(node.operand)
        if node.op == "+":
            return v
        n = to_number(v)
        if isinstance(n, ErrorValue):
            return n
        return -n if node.op == "-" else n / 100.0

    def _binary(self, node: Binary) -> CellValue:
        left = self.operand(node.left)
        right = self.operand(node.right)
        op = node.op
        if op == "&":
            a, b = to_text(left), to_text(right)
            if isinstance(a, ErrorValue):
                return a
            if isinstance(b, ErrorValue):
                return b
            return a + b
        if op in _COMPARATORS:
            c = compare(left, right)
            return c if isinstance(c, ErrorValue) else _COMPARATORS[op](c)
        a, b = to_number(left), to_number(right)
        if isinstance(a, ErrorValue):
            return a
        if isinstance(b, ErrorValue):
            return b
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return ErrorValue.DIV0 if b == 0 else a / b
        if op == "^":
            return _power(a, b)
        raise ValueError(f"unknown operator {op!r}")


def _power(a: float, b: float) -> CellValue:
    if a == 0 and b == 0:
        return ErrorValue.NUM
    if a == 0 and b < 0:
        return ErrorValue.DIV0
    if a < 0 and not float(b).is_integer():
        return ErrorValue.NUM
    try:
        return math.pow(a, b)
    except OverflowError:
        return ErrorValue.NUM


def evaluate_cell(wb: Workbook, addr: CellAddress, cache: Evaluator | None = None) -> CellValue:
    """Value of one cell; pass the same ``cache`` to share work across calls."""
    return (cache or Evaluator(wb)).value(addr)


def recompute_all(wb: Workbook, cache: Evaluator | None = None) -> dict[CellAddress, CellValue]:
    """Evaluate every formula cell exactly once."""
    ev = cache or Evaluator(wb)
    return {cell.address: ev.value(cell.address) for cell in wb.formula_cells()}


def describe(addr: CellAddress) -> str:
    return address_to_a1(addr, include_sheet=True)
