"""Fill inputs, recompute, compare against the system's outputs, keep evidence."""

from __future__ import annotations

import datetime as dt
import json
import random
import re
import time
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable

from .address import CellAddress, address_to_a1
from .errors import CapacityExceeded, IoError, OverwriteFormula, ResolutionError, UnknownSheet
from .formula import Evaluator
from .schema import ROW_WISE, SchemaExtraction, TableSpec, table_capacities
from .sources import Binding, Issue, ResolvedValue, collect_policy, match_bindings, parse_field_value
from .values import CellValue, ErrorValue, date_to_serial, encode_literal, is_number, serial_to_date, to_display
from .workbook import Workbook, dumps_canonical, set_input, workbook_to_dict

PASSED = "PASSED"
FAILED = "FAILED"
ERROR = "ERROR"

_PRECISION_RE = re.compile(r"^(Number|Percentage|Currency)\[([0-9])\]$")


@dataclass(frozen=True)
class CellVerdict:
    cell: CellAddress
    expected: CellValue
    actual: CellValue
    format: str
    match: bool
    detail: str | None = None

    def to_dict(self) -> dict[str, object]:
        return {
            "cell": address_to_a1(self.cell, True),
            "expected": encode_literal(self.expected),
            "actual": encode_literal(self.actual),
            "format": self.format,
            "match": self.match,
            "detail": self.detail,
        }


@dataclass
class ValidationRun:
    policy_id: str
    cs_sheet: str
    verdicts: list[CellVerdict]
    status: str
    issues: list[Issue]
    evidence_path: Path | None = None
    html_path: Path | None = None
    diagnostics: list[str] = field(default_factory=list)
    duration_ms: float = 0.0

    @property
    def mismatches(self) -> list[CellVerdict]:
        return [v for v in self.verdicts if not v.match]

    def verdict_line(self) -> str:
        line = f"{self.cs_sheet} {self.policy_id} {self.status}"
        n = len(self.mismatches)
        if self.status == FAILED:
            line += f" ({n} mismatch{'es' if n != 1 else ''})"
        elif self.status == ERROR:
            line += f" ({len(self.issues)} issue{'s' if len(self.issues) != 1 else ''})"
        return line


def run_status(verdicts: Iterable[CellVerdict], issues: list) -> str:
    if issues:
        return ERROR
    return PASSED if all(v.match for v in verdicts) else FAILED


# -- comparison ----------------------------------------------------------------

def _as_number(v: CellValue, fmt: str) -> float | None:
    if v is None:
        return 0.0
    if isinstance(v, bool):
        return None
    if is_number(v):
        return float(v)
    if isinstance(v, dt.date):
        return date_to_serial(v)
    if isinstance(v, str):
        try:
            return parse_field_value(v, fmt)
        except ResolutionError:
            return None
    return None


def _as_date(v: CellValue) -> dt.date | None:
    if isinstance(v, dt.date):
        return v
    if is_number(v):
        return serial_to_date(float(v))
    if isinstance(v, str):
        try:
            return dt.date.fromisoformat(v.strip())
        except ValueError:
            return None
    return None


def _display_round(x: float, digits: int, percent: bool) -> Decimal:
    d = Decimal(repr(x))
    if percent:
        d = d.scaleb(2)
    return d.quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_UP)


def compare_values(expected: CellValue, actual: CellValue, fmt: str, epsilon: float | None = None) -> tuple[bool, str | None]:
    """Compare a recomputed value with the system's value as a tester would see them.

    Numeric formats round both sides half-away-from-zero to the format's
    precision (percentages in percent units) and require equality; with
    ``epsilon`` the raw values are compared instead.
    """
    if isinstance(expected, ErrorValue):
        return False, f"specification computed {expected}"
    if isinstance(actual, ErrorValue):
        return False, f"system value is {actual}"
    m = _PRECISION_RE.match(fmt)
    if m:
        e, a = _as_number(expected, fmt), _as_number(actual, fmt)
        if e is None:
            return False, f"expected {to_display(expected)!r} is not numeric"
        if a is None:
            return False, f"actual {to_display(actual)!r} is not numeric"
        if epsilon is not None:
            ok = abs(e - a) <= epsilon
            return ok, None if ok else f"|{e!r} - {a!r}| > {epsilon}"
        digits, percent = int(m.group(2)), m.group(1) == "Percentage"
        re_, ra = _display_round(e, digits, percent), _display_round(a, digits, percent)
        if re_ == ra:
            return True, None
        unit = "%" if percent else ""
        return False, f"{re_}{unit} != {ra}{unit}"
    if fmt == "Date":
        e, a = _as_date(expected), _as_date(actual)
        if e is None or a is None:
            return False, f"cannot compare {to_display(expected)!r} and {to_display(actual)!r} as dates"
        return (True, None) if e == a else (False, f"{e.isoformat()} != {a.isoformat()}")
    e, a = to_display(expected).strip(), to_display(actual).strip()
    return (True, None) if e == a else (False, f"{e!r} != {a!r}")


# -- filling -------------------------------------------------------------------

def fill_inputs(
    wb: Workbook,
    schema: SchemaExtraction,
    inputs: dict[tuple[str, str], ResolvedValue],
    capacities: dict[CellAddress, TableSpec] | None = None,
    order: list[tuple[str, str]] | None = None,
) -> Workbook:
    """Write resolved inputs into ``wb`` (a private clone). Tables fill from the anchor."""
    records = {r.key: r for r in schema.input_records}
    keys = order if order is not None else [k for k in records if k in inputs]
    capacities = capacities or {}
    for key in keys:
        record = records[key]
        values = inputs[key].values
        anchor = record.address
        anchor = CellAddress(wb.canonical_sheet(anchor.sheet), anchor.col, anchor.row)
        if not record.is_table:
            set_input(wb, anchor, values[0])
            continue
        table = capacities.get(anchor)
        if table is not None and table.capacity is not None and len(values) > table.capacity:
            raise CapacityExceeded(
                f"{address_to_a1(anchor, True)}: {len(values)} values for a table of capacity {table.capacity}"
            )
        for i, value in enumerate(values):
            target = anchor.offset(rows=i) if record.direction == ROW_WISE else anchor.offset(cols=i)
            set_input(wb, target, value)
    return wb


# -- validation ----------------------------------------------------------------

def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._$-]+", "_", name)


def evidence_paths(out_dir: str | Path, cs_sheet: str, policy_id: str) -> tuple[Path, Path]:
    base = Path(out_dir) / _safe(cs_sheet) / _safe(policy_id)
    return base.with_name(base.name + ".evidence.json"), base.with_name(base.name + ".html")


def validate_policy(
    template: Workbook,
    schema: SchemaExtraction,
    bindings: list[Binding] | dict[tuple[str, str], Binding],
    policy_id: str,
    out_dir: str | Path | None = None,
    *,
    capacities: dict[CellAddress, TableSpec] | None = None,
    epsilon: float | None = None,
    fill_order_seed: int | None = None,
    timestamp: bool = False,
) -> ValidationRun:
    """Collect, fill, recompute and compare one policy. Data problems yield ERROR, not exceptions."""
    started = time.perf_counter()
    matched = bindings if isinstance(bindings, dict) else match_bindings(schema, bindings)
    cs_sheet = schema.records[0].cs_sheet if schema.records else f"{template.file_name}${schema.root}"
    if capacities is None:
        capacities = table_capacities(template, schema.root) if schema.root else {}

    data = collect_policy(schema, matched, policy_id)
    issues = list(data.issues)
    wb = template.clone()
    order = [r.key for r in schema.input_records if r.key in data.inputs]
    if fill_order_seed is not None:
        random.Random(fill_order_seed).shuffle(order)
    try:
        fill_inputs(wb, schema, data.inputs, capacities, order)
    except (CapacityExceeded, OverwriteFormula, UnknownSheet) as exc:
        issues.append(Issue(cs_sheet, "-", type(exc).__name__, str(exc)))

    ev = Evaluator(wb)
    verdicts = []
    for record in schema.output_records:
        addr = record.address
        expected = ev.value(CellAddress(wb.canonical_sheet(addr.sheet), addr.col, addr.row))
        got = data.pas_outputs.get(record.key)
        if got is None:
            verdicts.append(CellVerdict(addr, expected, None, record.format, False, "no system value collected"))
            continue
        ok, detail = compare_values(expected, got.value, record.format, epsilon)
        verdicts.append(CellVerdict(addr, expected, got.value, record.format, ok, detail))

    run = ValidationRun(
        policy_id=policy_id,
        cs_sheet=cs_sheet,
        verdicts=verdicts,
        status=run_status(verdicts, issues),
        issues=issues,
        diagnostics=[f"{address_to_a1(a, True) if a else '-'}: {msg}" for a, msg in ev.diagnostics],
    )
    if out_dir is not None:
        write_evidence(run, wb, out_dir, schema=schema, evaluator=ev, timestamp=timestamp)
    run.duration_ms = (time.perf_counter() - started) * 1000.0
    return run


def evidence_document(run: ValidationRun, wb: Workbook, evaluator: Evaluator | None = None) -> dict[str, object]:
    evaluator = evaluator or Evaluator(wb)
    doc = workbook_to_dict(wb)
    doc["policy"] = run.policy_id
    doc["cs_sheet"] = run.cs_sheet
    doc["status"] = run.status
    doc["verdicts"] = [v.to_dict() for v in run.verdicts]
    doc["issues"] = [i.to_dict() for i in run.issues]
    doc["computed"] = {
        address_to_a1(c.address, True): encode_literal(evaluator.value(c.address)) for c in wb.formula_cells()
    }
    if run.diagnostics:
        doc["diagnostics"] = list(run.diagnostics)
    return doc


def write_evidence(
    run: ValidationRun,
    wb: Workbook,
    out_dir: str | Path,
    *,
    schema: SchemaExtraction | None = None,
    evaluator: Evaluator | None = None,
    timestamp: bool = False,
) -> tuple[Path, Path]:
    """Write ``<out>/<sheet>/<policy>.evidence.json`` and the matching ``.html`` page."""
    from .report import render_evidence_html

    json_path, html_path = evidence_paths(out_dir, run.cs_sheet, run.policy_id)
    evaluator = evaluator or Evaluator(wb)
    doc = evidence_document(run, wb, evaluator)
    try:
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(dumps_canonical(doc), encoding="utf-8")
        html_path.write_text(render_evidence_html(run, wb, evaluator, schema, timestamp=timestamp), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write evidence under {out_dir}: {exc}") from exc
    run.evidence_path, run.html_path = json_path, html_path
    return json_path, html_path


def load_evidence(path: str | Path) -> dict[str, object]:
    return json.loads(Path(path).read_text(encoding="utf-8"))
