"""Static HTML pages: per-policy evidence sheets and the batch dashboard."""

from __future__ import annotations

import datetime as dt
import os
from html import escape
from pathlib import Path
from typing import TYPE_CHECKING

from .address import CellAddress, address_to_a1, column_label
from .values import to_display

if TYPE_CHECKING:
    from .batch import BatchSummary
    from .formula import Evaluator
    from .schema import SchemaExtraction
    from .validator import ValidationRun
    from .workbook import Workbook

_CSS = """
body { font-family: -apple-system, Segoe UI, Helvetica, Arial, sans-serif; margin: 1.5rem; color: #222; }
.banner { padding: .8rem 1rem; border-radius: 6px; font-weight: bold; margin-bottom: 1rem; }
.banner.PASSED { background: #e3f6e5; color: #1d6b2b; }
.banner.FAILED { background: #fde6e4; color: #9c1c10; }
.banner.ERROR { background: #fff2d6; color: #7a5200; }
table { border-collapse: collapse; margin: .5rem 0 1.5rem; }
th, td { border: 1px solid #ccc; padding: 3px 8px; font-size: 13px; }
th { background: #f3f3f3; }
td.cell.input { background: #eef5ff; }
td.cell.output { background: #f2fbf2; font-weight: bold; }
td.cell.mismatch { background: #ffb3ab; outline: 2px solid #c0392b; }
tr.bad td { color: #9c1c10; }
.num { text-align: right; }
.meta { color: #777; font-size: 12px; }
"""


def _page(title: str, body: str, timestamp: bool) -> str:
    stamp = ""
    if timestamp:
        stamp = f'<p class="meta">Generated {dt.datetime.now().isoformat(timespec="seconds")}</p>\n'
    return (
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
        f"<title>{escape(title)}</title>\n<style>{_CSS}</style>\n</head>\n<body>\n"
        f"{stamp}{body}</body>\n</html>\n"
    )


def _grid(wb: Workbook, sheet_name: str, evaluator: Evaluator, roles: dict[CellAddress, str], bad: set[CellAddress]) -> str:
    sheet = wb.sheet(sheet_name)
    used = [c.address for c in sheet if not c.is_empty] + [a for a in roles if a.sheet == sheet.name]
    if not used:
        return "<p class=\"meta\">(empty sheet)</p>\n"
    max_row = max(a.row for a in used)
    max_col = max(a.col for a in used)
    out = ["<table class=\"grid\">\n<tr><th></th>"]
    out.extend(f"<th>{column_label(c)}</th>" for c in range(1, max_col + 1))
    out.append("</tr>\n")
    for row in range(1, max_row + 1):
        out.append(f"<tr><th>{row}</th>")
        for col in range(1, max_col + 1):
            addr = CellAddress(sheet.name, col, row)
            cell = sheet.cells.get((col, row))
            value = evaluator.value(addr) if cell is not None else None
            classes = ["cell"]
            if addr in roles:
                classes.append(roles[addr])
            if addr in bad:
                classes.append("mismatch")
            title = f' title="{escape(cell.formula)}"' if cell is not None and cell.is_formula else ""
            out.append(
                f'<td class="{" ".join(classes)}" data-cell="{escape(address_to_a1(addr, True))}"{title}>'
                f"{escape(to_display(value))}</td>"
            )
        out.append("</tr>\n")
    out.append("</table>\n")
    return "".join(out)


def render_evidence_html(
    run: ValidationRun,
    wb: Workbook,
    evaluator: Evaluator,
    schema: SchemaExtraction | None = None,
    timestamp: bool = False,
) -> str:
    roles: dict[CellAddress, str] = {}
    if schema is not None:
        for table in schema.tables:
            for addr in table.cells():
                roles[addr] = "input"
        for record in schema.input_records:
            roles.setdefault(record.address, "input")
    for v in run.verdicts:
        roles[v.cell] = "output"
    bad = {v.cell for v in run.verdicts if not v.match}

    parts = [
        f"<h1>Evidence: {escape(run.cs_sheet)} / policy {escape(run.policy_id)}</h1>\n",
        f'<div class="banner {run.status}">{escape(run.verdict_line())}</div>\n',
        "<h2>Output verdicts</h2>\n<table>\n<tr><th>Cell</th><th>Format</th><th>Expected (sheet)</th>"
        "<th>Actual (system)</th><th>Result</th><th>Detail</th></tr>\n",
    ]
    for v in run.verdicts:
        parts.append(
            f'<tr class="{"ok" if v.match else "bad"}"><td>{escape(address_to_a1(v.cell, True))}</td>'
            f"<td>{escape(v.format)}</td><td class=\"num\">{escape(to_display(v.expected))}</td>"
            f"<td class=\"num\">{escape(to_display(v.actual))}</td><td>{'match' if v.match else 'MISMATCH'}</td>"
            f"<td>{escape(v.detail or '')}</td></tr>\n"
        )
    parts.append("</table>\n")
    if run.issues:
        parts.append("<h2>Issues</h2>\n<ul class=\"issues\">\n")
        parts.extend(f"<li>{escape(str(i))}</li>\n" for i in run.issues)
        parts.append("</ul>\n")
    sheets = schema.sheets if schema is not None and schema.sheets else wb.sheet_names
    for name in sheets:
        parts.append(f"<h2>Sheet {escape(name)}</h2>\n")
        parts.append(_grid(wb, name, evaluator, roles, bad))
    return _page(f"Evidence {run.cs_sheet} {run.policy_id}", "".join(parts), timestamp)


def render_dashboard_html(summary: BatchSummary, out_path: str | Path, timestamp: bool = False) -> str:
    """Per-sheet totals plus one row per policy linking to its evidence page."""
    base = Path(out_path).parent
    parts = ["<h1>Validation dashboard</h1>\n"]
    totals = summary.totals()
    parts.append(
        "<h2>Totals per sheet</h2>\n<table class=\"totals\">\n"
        "<tr><th>CS sheet</th><th>PASSED</th><th>FAILED</th><th>ERROR</th><th>Total</th></tr>\n"
    )
    for sheet, counts in totals.items():
        parts.append(
            f"<tr><td>{escape(sheet)}</td><td class=\"num\">{counts['PASSED']}</td>"
            f"<td class=\"num\">{counts['FAILED']}</td><td class=\"num\">{counts['ERROR']}</td>"
            f"<td class=\"num\">{sum(counts.values())}</td></tr>\n"
        )
    parts.append("</table>\n")
    parts.append(
        "<h2>Policies</h2>\n<table class=\"rows\">\n"
        "<tr><th>CS sheet</th><th>Policy</th><th>Status</th><th>Mismatches</th><th>Evidence</th></tr>\n"
    )
    for row in summary.rows:
        link = ""
        if row.evidence_html:
            rel = os.path.relpath(row.evidence_html, base).replace(os.sep, "/")
            link = f'<a href="{escape(rel)}">evidence</a>'
        parts.append(
            f'<tr class="{row.status}"><td>{escape(row.cs_sheet)}</td><td>{escape(row.policy_id)}</td>'
            f"<td>{row.status}</td><td class=\"num\">{row.mismatches}</td><td>{link}</td></tr>\n"
        )
    parts.append("</table>\n")
    if timestamp and summary.wall_time_ms is not None:
        parts.append(f'<p class="meta">Wall time {summary.wall_time_ms:.0f} ms</p>\n')
    return _page("Validation dashboard", "".join(parts), timestamp)
