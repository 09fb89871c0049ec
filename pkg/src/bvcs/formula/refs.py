"""Static reference extraction (never evaluates)."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..address import CellAddress
from .nodes import Binary, Call, Node, RangeRef, Ref, Unary


@dataclass(frozen=True)
class RefSet:
    cells: frozenset[CellAddress] = field(default_factory=frozenset)
    sheets: frozenset[str] = field(default_factory=frozenset)


def iter_references(node: Node):
    """Yield every Ref and RangeRef node in evaluation-independent order."""
    stack = [node]
    while stack:
        n = stack.pop()
        if isinstance(n, (Ref, RangeRef)):
            yield n
        elif isinstance(n, Binary):
            stack.append(n.right)
            stack.append(n.left)
        elif isinstance(n, Unary):
            stack.append(n.operand)
        elif isinstance(n, Call):
            stack.extend(reversed(n.args))


def extract_refs(node: Node, containing_sheet: str) -> RefSet:
    """Referenced cells (ranges expanded) and the foreign sheets they live on."""
    cells: set[CellAddress] = set()
    for ref in iter_references(node):
        if isinstance(ref, Ref):
            cells.add(ref.address)
        else:
            cells.update(ref.cells())
    home = containing_sheet.casefold()
    sheets = {a.sheet for a in cells if a.sheet.casefold() != home}
    return RefSet(frozenset(cells), frozenset(sheets))
