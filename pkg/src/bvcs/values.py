"""Cell value model.

A cell value is one of::

    float           Number
    str             Text
    bool            Boolean
    datetime.date   Date
    None            Blank
    ErrorValue      Error

Integers are normalised to ``float`` on the way in (``as_value``).
"""

from __future__ import annotations

import datetime as dt
import enum
import math
from decimal import ROUND_DOWN, ROUND_HALF_UP, ROUND_UP, Context, Decimal
from typing import Union

EPOCH = dt.date(1899, 12, 30)


class ErrorValue(enum.Enum):
    DIV0 = "#DIV/0!"
    REF = "#REF!"
    VALUE = "#VALUE!"
    NAME = "#NAME?"
    CYCLE = "#CYCLE!"
    NA = "#N/A"
    NUM = "#NUM!"

    def __str__(self) -> str:
        return self.value


CellValue = Union[float, str, bool, dt.date, None, ErrorValue]


def is_number(v: object) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def as_value(v: object) -> CellValue:
    """Normalise a Python object into the cell value model."""
    if v is None or isinstance(v, (bool, str, ErrorValue)):
        return v
    if isinstance(v, dt.datetime):
        return v.date()
    if isinstance(v, dt.date):
        return v
    if isinstance(v, (int, float)):
        return float(v)
    raise TypeError(f"not a cell value: {v!r}")


def date_to_serial(d: dt.date) -> float:
    return float((d - EPOCH).days)


def serial_to_date(serial: float) -> dt.date:
    return EPOCH + dt.timedelta(days=math.floor(serial))


def format_number(x: float) -> str:
    """Shortest round-trip decimal text; integral values drop the ``.0``."""
    if x == 0:
        return "0"
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def to_display(v: CellValue) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, float):
        return format_number(v)
    if isinstance(v, dt.date):
        return v.isoformat()
    if isinstance(v, ErrorValue):
        return v.value
    return str(v)


_ROUND_CTX = Context(prec=800)
_MODES = {"half_up": ROUND_HALF_UP, "up": ROUND_UP, "down": ROUND_DOWN}


def round_decimal(x: float, digits: int, mode: str = "half_up") -> Decimal:
    """Round the shortest decimal representation of ``x``.

    ``half_up`` is half-away-from-zero, ``up`` is away from zero and
    ``down`` is toward zero, all applied to the printed digits rather than
    the binary value (so ``round_decimal(2.675, 2)`` is ``2.68``).
    """
    d = Decimal(repr(float(x)))
    quantum = Decimal(1).scaleb(-digits)
    return d.quantize(quantum, rounding=_MODES[mode], context=_ROUND_CTX)


def round_number(x: float, digits: int, mode: str = "half_up") -> float:
    if not math.isfinite(x):
        return x
    return float(round_decimal(x, digits, mode))


# JSON literal encoding shared by the workbook, evidence and golden files.

def encode_literal(v: CellValue) -> object:
    if isinstance(v, float):
        if v.is_integer() and abs(v) < 1e16:
            return int(v)
        return v
    if isinstance(v, dt.date):
        return {"d": v.isoformat()}
    if isinstance(v, ErrorValue):
        return {"e": v.name}
    return v


def decode_literal(raw: object) -> CellValue:
    if isinstance(raw, dict):
        if set(raw) == {"d"}:
            return dt.date.fromisoformat(raw["d"])
        if set(raw) == {"e"}:
            return ErrorValue[raw["e"]]
        raise ValueError(f"unrecognised literal object {raw!r}")
    if isinstance(raw, (list, tuple)):
        raise ValueError(f"arrays are not cell literals: {raw!r}")
    return as_value(raw)
