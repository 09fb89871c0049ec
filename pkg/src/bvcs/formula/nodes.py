"""Formula expression tree."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from ..address import CellAddress
from ..values import CellValue


@dataclass(frozen=True)
class Literal:
    value: CellValue


@dataclass(frozen=True)
class Ref:
    address: CellAddress


@dataclass(frozen=True)
class RangeRef:
    start: CellAddress
    end: CellAddress

    @property
    def sheet(self) -> str:
        return self.start.sheet

    @property
    def shape(self) -> tuple[int, int]:
        return (self.end.row - self.start.row + 1, self.end.col - self.start.col + 1)

    def cells(self) -> list[CellAddress]:
        """Row-major enumeration of every enclosed cell."""
        return [
            CellAddress(self.sheet, col, row)
            for row in range(self.start.row, self.end.row + 1)
            for col in range(self.start.col, self.end.col + 1)
        ]


@dataclass(frozen=True)
class Name:
    """A bare identifier that is neither a reference nor a function call."""

    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "-", "+", "%"
    operand: Node


@dataclass(frozen=True)
class Binary:
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[Node, ...]


Node = Union[Literal, Ref, RangeRef, Name, Unary, Binary, Call]
