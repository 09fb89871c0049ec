"""Spreadsheet coercion rules shared by operators and built-ins."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

from ..values import CellValue, ErrorValue, date_to_serial, format_number, is_number


@dataclass(frozen=True)
class RangeValue:
    """Evaluated rectangle, row-major. ``from_ref`` marks a single-cell reference."""

    rows: tuple[tuple[CellValue, ...], ...]
    from_ref: bool = False

    @property
    def height(self) -> int:
        return len(self.rows)

    @property
    def width(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def values(self):
        for row in self.rows:
            yield from row


def scalar(arg: CellValue | RangeValue) -> CellValue:
    """Collapse an argument to a scalar; multi-cell ranges are misuse (#REF!)."""
    if isinstance(arg, RangeValue):
        if arg.height == 1 and arg.width == 1:
            return arg.rows[0][0]
        return ErrorValue.REF
    return arg


def parse_number_text(text: str) -> float | None:
    s = text.strip().replace(",", "")
    if not s:
        return None
    scale = 1.0
    if s.endswith("%"):
        s, scale = s[:-1], 0.01
    try:
        return float(s) * scale
    except ValueError:
        return None


def to_number(v: CellValue) -> float | ErrorValue:
    if isinstance(v, ErrorValue):
        return v
    if v is None:
        return 0.0
    if isinstance(v, bool):
        return 1.0 if v else 0.0
    if is_number(v):
        return float(v)
    if isinstance(v, dt.date):
        return date_to_serial(v)
    n = parse_number_text(v)
    return ErrorValue.VALUE if n is None else n


def to_text(v: CellValue) -> str | ErrorValue:
    if isinstance(v, ErrorValue):
        return v
    if v is None:
        return ""
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if is_number(v):
        return format_number(float(v))
    if isinstance(v, dt.date):
        return format_number(date_to_serial(v))
    return v


def to_bool(v: CellValue) -> bool | ErrorValue:
    if isinstance(v, ErrorValue):
        return v
    if v is None:
        return False
    if isinstance(v, bool):
        return v
    if is_number(v):
        return v != 0
    if isinstance(v, dt.date):
        return True
    upper = v.strip().upper()
    if upper == "TRUE":
        return True
    if upper == "FALSE":
        return False
    return ErrorValue.VALUE


def _rank(v: CellValue) -> int:
    # numbers (and dates) < text < booleans
    if isinstance(v, bool):
        return 2
    if isinstance(v, str):
        return 1
    return 0


def compare(left: CellValue, right: CellValue) -> int | ErrorValue:
    """Three-way comparison with spreadsheet typing; text is case-insensitive."""
    for v in (left, right):
        if isinstance(v, ErrorValue):
            return v
    if left is None:
        left = _blank_like(right)
    if right is None:
        right = _blank_like(left)
    rl, rr = _rank(left), _rank(right)
    if rl != rr:
        return -1 if rl < rr else 1
    if rl == 1:
        a, b = left.casefold(), right.casefold()
    elif rl == 2:
        a, b = int(left), int(right)
    else:
        a, b = to_number(left), to_number(right)
    return (a > b) - (a < b)


def _blank_like(other: CellValue) -> CellValue:
    if isinstance(other, str):
        return ""
    if isinstance(other, bool):
        return False
    return 0.0


def lookup_equal(a: CellValue, b: CellValue) -> bool:
    """Exact-match rule for VLOOKUP/MATCH: same type family, text case-insensitive."""
    if a is None or b is None or isinstance(a, ErrorValue) or isinstance(b, ErrorValue):
        return False
    if _rank(a) != _rank(b):
        return False
    return compare(a, b) == 0
