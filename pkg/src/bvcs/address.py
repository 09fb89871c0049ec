"""A1-notation cell addresses."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import MalformedAddress

_A1 = re.compile(r"^\$?([A-Z]+)\$?([0-9]+)$")
_QUOTED_SHEET = re.compile(r"^'((?:[^']|'')+)'!(.*)$")
_SIMPLE_SHEET = re.compile(r"^([^'!]+)!(.*)$")
_NEEDS_QUOTES = re.compile(r"[^A-Za-z0-9_.]")


@dataclass(frozen=True)
class CellAddress:
    sheet: str
    col: int
    row: int

    def __post_init__(self) -> None:
        if not self.sheet:
            raise MalformedAddress("empty sheet name")
        if self.col < 1 or self.row < 1:
            raise MalformedAddress(f"column and row must be >= 1, got ({self.col}, {self.row})")

    @property
    def a1(self) -> str:
        return f"{column_label(self.col)}{self.row}"

    def sort_key(self) -> tuple[str, int, int]:
        return (self.sheet.casefold(), self.row, self.col)

    def offset(self, rows: int = 0, cols: int = 0) -> CellAddress:
        return CellAddress(self.sheet, self.col + cols, self.row + rows)

    def __str__(self) -> str:
        return address_to_a1(self, include_sheet=True)


def column_label(index: int) -> str:
    """1-based column index to letters (1 -> A, 27 -> AA)."""
    if index < 1:
        raise MalformedAddress(f"column index must be positive, got {index}")
    letters = []
    while index > 0:
        index, rem = divmod(index - 1, 26)
        letters.append(chr(ord("A") + rem))
    return "".join(reversed(letters))


def column_index(label: str) -> int:
    index = 0
    for ch in label.upper():
        if not "A" <= ch <= "Z":
            raise MalformedAddress(f"invalid column label {label!r}")
        index = index * 26 + (ord(ch) - ord("A") + 1)
    if index == 0:
        raise MalformedAddress("empty column label")
    return index


def split_sheet(text: str) -> tuple[str | None, str]:
    """Split an optional ``Sheet!`` or ``'My Sheet'!`` qualifier off a reference."""
    m = _QUOTED_SHEET.match(text)
    if m:
        return m.group(1).replace("''", "'"), m.group(2)
    m = _SIMPLE_SHEET.match(text)
    if m:
        return m.group(1), m.group(2)
    return None, text


def parse_a1(cell: str) -> tuple[int, int]:
    """Return ``(col, row)`` for a bare A1 string; ``$`` markers are ignored."""
    m = _A1.match(cell.strip().upper())
    if not m:
        raise MalformedAddress(f"malformed cell reference {cell!r}")
    row = int(m.group(2))
    if row == 0:
        raise MalformedAddress(f"row 0 in {cell!r}")
    return column_index(m.group(1)), row


def a1_to_address(a1: str, default_sheet: str) -> CellAddress:
    if not a1 or not a1.strip():
        raise MalformedAddress("empty cell reference")
    sheet, rest = split_sheet(a1.strip())
    col, row = parse_a1(rest)
    return CellAddress(sheet or default_sheet, col, row)


def quote_sheet(name: str) -> str:
    if _NEEDS_QUOTES.search(name):
        return "'" + name.replace("'", "''") + "'"
    return name


def address_to_a1(addr: CellAddress, include_sheet: bool = False) -> str:
    if include_sheet:
        return f"{quote_sheet(addr.sheet)}!{addr.a1}"
    return addr.a1
