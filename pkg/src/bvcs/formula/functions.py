"""Built-in functions.

Every function takes the evaluator (for lazy arguments and diagnostics) and
the argument nodes. Errors are returned as values, never raised.
"""

from __future__ import annotations

import datetime as dt
import math
from typing import TYPE_CHECKING, Callable

from ..values import CellValue, ErrorValue, is_number, round_number, serial_to_date
from .coerce import RangeValue, lookup_equal, scalar, to_bool, to_number
from .nodes import Node

if TYPE_CHECKING:
    from .evaluator import Evaluator

Builtin = Callable[["Evaluator", tuple[Node, ...]], "CellValue | RangeValue"]

BUILTINS: dict[str, Builtin] = {}


def builtin(name: str, min_args: int, max_args: int | None = None, lazy: bool = False):
    def register(fn):
        def wrapper(ev: Evaluator, nodes: tuple[Node, ...]):
            if len(nodes) < min_args or (max_args is not None and len(nodes) > max_args):
                return ErrorValue.VALUE
            if lazy:
                return fn(ev, nodes)
            return fn(ev, [ev.argument(n) for n in nodes])

        BUILTINS[name] = wrapper
        return fn

    return register


def _numbers(args) -> list[float] | ErrorValue:
    """Numeric values for the aggregate family.

    Inside ranges (and plain references) only numbers and dates count; values
    typed directly as arguments are coerced.
    """
    out = []
    for arg in args:
        if isinstance(arg, RangeValue):
            for v in arg.values():
                if isinstance(v, ErrorValue):
                    return v
                if is_number(v) or (isinstance(v, dt.date)):
                    out.append(to_number(v))
        else:
            n = to_number(arg)
            if isinstance(n, ErrorValue):
                return n
            out.append(n)
    return out


@builtin("SUM", 1)
def _sum(ev, args):
    nums = _numbers(args)
    return nums if isinstance(nums, ErrorValue) else math.fsum(nums)


@builtin("AVERAGE", 1)
def _average(ev, args):
    nums = _numbers(args)
    if isinstance(nums, ErrorValue):
        return nums
    if not nums:
        return ErrorValue.DIV0
    return math.fsum(nums) / len(nums)


@builtin("MIN", 1)
def _min(ev, args):
    nums = _numbers(args)
    if isinstance(nums, ErrorValue):
        return nums
    return min(nums) if nums else 0.0


@builtin("MAX", 1)
def _max(ev, args):
    nums = _numbers(args)
    if isinstance(nums, ErrorValue):
        return nums
    return max(nums) if nums else 0.0


@builtin("COUNT", 1)
def _count(ev, args):
    count = 0
    for arg in args:
        if isinstance(arg, RangeValue):
            count += sum(1 for v in arg.values() if is_number(v) or isinstance(v, dt.date))
        elif arg is not None and not isinstance(arg, ErrorValue) and not isinstance(to_number(arg), ErrorValue):
            count += 1
    return float(count)


@builtin("IF", 1, 3, lazy=True)
def _if(ev, nodes):
    cond = to_bool(scalar(ev.argument(nodes[0])))
    if isinstance(cond, ErrorValue):
        return cond
    if cond:
        return ev.argument(nodes[1]) if len(nodes) > 1 else True
    return ev.argument(nodes[2]) if len(nodes) > 2 else False


def _logical(args) -> list[bool] | ErrorValue:
    out = []
    for arg in args:
        if isinstance(arg, RangeValue):
            for v in arg.values():
                if isinstance(v, ErrorValue):
                    return v
                if isinstance(v, bool) or is_number(v):
                    out.append(bool(v))
        else:
            b = to_bool(arg)
            if isinstance(b, ErrorValue):
                return b
            out.append(b)
    return out if out else ErrorValue.VALUE


@builtin("AND", 1)
def _and(ev, args):
    vals = _logical(args)
    return vals if isinstance(vals, ErrorValue) else all(vals)


@builtin("OR", 1)
def _or(ev, args):
    vals = _logical(args)
    return vals if isinstance(vals, ErrorValue) else any(vals)


@builtin("NOT", 1, 1)
def _not(ev, args):
    b = to_bool(scalar(args[0]))
    return b if isinstance(b, ErrorValue) else not b


@builtin("ABS", 1, 1)
def _abs(ev, args):
    n = to_number(scalar(args[0]))
    return n if isinstance(n, ErrorValue) else abs(n)


def _rounder(mode: str):
    def fn(ev, args):
        x = to_number(scalar(args[0]))
        if isinstance(x, ErrorValue):
            return x
        digits = to_number(scalar(args[1])) if len(args) > 1 else 0.0
        if isinstance(digits, ErrorValue):
            return digits
        return round_number(x, math.trunc(digits), mode)

    return fn


builtin("ROUND", 1, 2)(_rounder("half_up"))
builtin("ROUNDUP", 1, 2)(_rounder("up"))
builtin("ROUNDDOWN", 1, 2)(_rounder("down"))


def _exact_flag(ev, args, index: int, default_exact: bool, name: str) -> ErrorValue | None:
    """Only exact-match lookups are supported."""
    if len(args) > index and args[index] is not None:
        flag = scalar(args[index])
        if isinstance(flag, ErrorValue):
            return flag
        if name == "MATCH":
            n = to_number(flag)
            exact = not isinstance(n, ErrorValue) and n == 0
        else:
            b = to_bool(flag)
            if isinstance(b, ErrorValue):
                return b
            exact = not b
    else:
        exact = default_exact
    if not exact:
        ev.diagnose(f"UnsupportedFeature: {name} supports exact match only")
        return ErrorValue.VALUE
    return None


@builtin("VLOOKUP", 3, 4)
def _vlookup(ev, args):
    err = _exact_flag(ev, args, 3, default_exact=False, name="VLOOKUP")
    if err is not None:
        return err
    key = scalar(args[0])
    if isinstance(key, ErrorValue):
        return key
    table = args[1]
    if not isinstance(table, RangeValue):
        return ErrorValue.VALUE
    col = to_number(scalar(args[2]))
    if isinstance(col, ErrorValue):
        return col
    col = math.trunc(col)
    if col < 1:
        return ErrorValue.VALUE
    if col > table.width:
        return ErrorValue.REF
    for row in table.rows:
        if lookup_equal(row[0], key):
            return row[col - 1]
    return ErrorValue.NA


@builtin("INDEX", 2, 3)
def _index(ev, args):
    table = args[0]
    if not isinstance(table, RangeValue):
        return ErrorValue.VALUE
    idx = []
    for arg in args[1:]:
        n = to_number(scalar(arg))
        if isinstance(n, ErrorValue):
            return n
        idx.append(math.trunc(n))
    if len(idx) == 1:
        if table.height == 1:
            row, col = 1, idx[0]
        elif table.width == 1:
            row, col = idx[0], 1
        else:
            return ErrorValue.REF
    else:
        row, col = idx
    if row < 1 or col < 1:
        return ErrorValue.VALUE
    if row > table.height or col > table.width:
        return ErrorValue.REF
    return table.rows[row - 1][col - 1]


@builtin("MATCH", 2, 3)
def _match(ev, args):
    err = _exact_flag(ev, args, 2, default_exact=False, name="MATCH")
    if err is not None:
        return err
    key = scalar(args[0])
    if isinstance(key, ErrorValue):
        return key
    table = args[1]
    if not isinstance(table, RangeValue):
        return ErrorValue.VALUE
    if table.height != 1 and table.width != 1:
        return ErrorValue.NA
    for pos, v in enumerate(table.values(), start=1):
        if lookup_equal(v, key):
            return float(pos)
    return ErrorValue.NA


@builtin("DATE", 3, 3)
def _date(ev, args):
    parts = []
    for arg in args:
        n = to_number(scalar(arg))
        if isinstance(n, ErrorValue):
            return n
        parts.append(math.trunc(n))
    year, month, day = parts
    if 0 <= year < 1900:
        year += 1900
    y, m = divmod(month - 1, 12)
    try:
        first = dt.date(year + y, m + 1, 1)
        return first + dt.timedelta(days=day - 1)
    except (ValueError, OverflowError):
        return ErrorValue.NUM


def _as_date(v: CellValue) -> dt.date | ErrorValue:
    if isinstance(v, ErrorValue):
        return v
    if isinstance(v, dt.date):
        return v
    if isinstance(v, str):
        try:
            return dt.date.fromisoformat(v.strip())
        except ValueError:
            return ErrorValue.VALUE
    n = to_number(v)
    if isinstance(n, ErrorValue):
        return n
    if n < 0:
        return ErrorValue.NUM
    try:
        return serial_to_date(n)
    except OverflowError:
        return ErrorValue.NUM


def _date_part(attr: str):
    def fn(ev, args):
        d = _as_date(scalar(args[0]))
        return d if isinstance(d, ErrorValue) else float(getattr(d, attr))

    return fn


builtin("YEAR", 1, 1)(_date_part("year"))
builtin("MONTH", 1, 1)(_date_part("month"))
builtin("DAY", 1, 1)(_date_part("day"))
