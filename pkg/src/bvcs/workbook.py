"""In-memory workbook model and the ``.wbk.json`` document format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterator, Mapping

from .address import CellAddress, a1_to_address, address_to_a1, parse_a1
from .errors import EmptyWorkbook, MalformedAddress, ParseError, UnknownSheet, UnresolvedSheet, OverwriteFormula
from .formula.nodes import Node
from .formula.parser import parse_formula
from .values import CellValue, as_value, decode_literal, encode_literal

ROW_WISE = "RowWise"
COLUMN_WISE = "ColumnWise"
DIRECTIONS = (ROW_WISE, COLUMN_WISE)

_CELL_KEYS = {"v", "f", "src", "fmt"}


@dataclass(frozen=True)
class Cell:
    address: CellAddress
    value: CellValue = None
    formula: str | None = None
    ast: Node | None = field(default=None, compare=False, repr=False)
    data_source: str | None = None
    format: str | None = None

    @property
    def is_formula(self) -> bool:
        return self.formula is not None

    @property
    def is_empty(self) -> bool:
        """No literal and no formula; annotations alone do not count."""
        return self.formula is None and self.value is None


@dataclass(frozen=True)
class TableDecl:
    anchor: CellAddress
    direction: str
    capacity: int

    def cells(self) -> list[CellAddress]:
        if self.direction == ROW_WISE:
            return [self.anchor.offset(rows=i) for i in range(self.capacity)]
        return [self.anchor.offset(cols=i) for i in range(self.capacity)]


@dataclass
class Sheet:
    name: str
    cells: dict[tuple[int, int], Cell] = field(default_factory=dict)

    def __iter__(self) -> Iterator[Cell]:
        """Cells in (row, col) order."""
        for key in sorted(self.cells, key=lambda k: (k[1], k[0])):
            yield self.cells[key]


@dataclass
class Workbook:
    file_name: str
    sheets: dict[str, Sheet] = field(default_factory=dict)  # casefolded name -> Sheet, declaration order
    tables: tuple[TableDecl, ...] = ()
    # Formula-derived analyses (cycle sets, ...). Formulas never change after
    # load, so clones share this.
    analysis: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)

    @property
    def sheet_names(self) -> list[str]:
        return [s.name for s in self.sheets.values()]

    def sheet(self, name: str) -> Sheet:
        try:
            return self.sheets[name.casefold()]
        except KeyError:
            raise UnknownSheet(name) from None

    def canonical_sheet(self, name: str) -> str:
        return self.sheet(name).name

    def cells(self) -> Iterator[Cell]:
        for sheet in self.sheets.values():
            yield from sheet

    def formula_cells(self) -> Iterator[Cell]:
        return (c for c in self.cells() if c.is_formula)

    def clone(self) -> Workbook:
        sheets = {key: Sheet(s.name, dict(s.cells)) for key, s in self.sheets.items()}
        return Workbook(self.file_name, sheets, self.tables, self.analysis)

    @classmethod
    def from_cells(cls, sheets: Mapping[str, Mapping[str, object]], file_name: str = "book.wbk") -> Workbook:
        """Build a workbook from ``{sheet: {"A1": value-or-"=formula"}}``."""
        doc_sheets = []
        for name, cells in sheets.items():
            doc_cells = {}
            for a1, raw in cells.items():
                if isinstance(raw, str) and raw.startswith("="):
                    doc_cells[a1] = {"f": raw}
                else:
                    doc_cells[a1] = {"v": encode_literal(as_value(raw))}
            doc_sheets.append({"name": name, "cells": doc_cells})
        return workbook_from_dict({"file": file_name, "sheets": doc_sheets})


def get_cell(wb: Workbook, addr: CellAddress) -> Cell:
    sheet = wb.sheet(addr.sheet)
    cell = sheet.cells.get((addr.col, addr.row))
    if cell is None:
        return Cell(CellAddress(sheet.name, addr.col, addr.row))
    return cell


def set_input(wb: Workbook, addr: CellAddress, value: object) -> None:
    """Replace the literal at ``addr``; formula cells are refused."""
    sheet = wb.sheet(addr.sheet)
    key = (addr.col, addr.row)
    current = sheet.cells.get(key)
    if current is not None and current.is_formula:
        raise OverwriteFormula(f"{address_to_a1(current.address, True)} holds formula {current.formula}")
    if current is None:
        current = Cell(CellAddress(sheet.name, addr.col, addr.row))
    sheet.cells[key] = replace(current, value=as_value(value))


# -- document format ---------------------------------------------------------

def _fail(message: str, location: str | None = None):
    raise ParseError(message, location=location)


def workbook_from_dict(doc: object, source: str | None = None) -> Workbook:
    if not isinstance(doc, dict):
        _fail("workbook document must be an object", source)
    file_name = doc.get("file")
    if not isinstance(file_name, str) or not file_name:
        _fail("missing or empty 'file'", source)
    raw_sheets = doc.get("sheets")
    if not isinstance(raw_sheets, list):
        _fail("'sheets' must be a list", source)
    if not raw_sheets:
        raise EmptyWorkbook(f"{source or file_name}: workbook has no sheets")

    wb = Workbook(file_name)
    for raw in raw_sheets:
        if not isinstance(raw, dict) or not isinstance(raw.get("name"), str) or not raw["name"]:
            _fail("every sheet needs a non-empty 'name'", source)
        name = raw["name"]
        if name.casefold() in wb.sheets:
            _fail(f"duplicate sheet name {name!r}", source)
        wb.sheets[name.casefold()] = Sheet(name)

    def resolve(ref_sheet: str) -> str:
        sheet = wb.sheets.get(ref_sheet.casefold())
        if sheet is None:
            raise UnresolvedSheet(ref_sheet)
        return sheet.name

    for raw in raw_sheets:
        sheet = wb.sheets[raw["name"].casefold()]
        cells = raw.get("cells", {})
        if not isinstance(cells, dict):
            _fail(f"sheet {sheet.name!r}: 'cells' must be an object", source)
        for key, spec in cells.items():
            location = f"{sheet.name}!{key}"
            try:
                col, row = parse_a1(key)
            except MalformedAddress as exc:
                _fail(str(exc), location)
            if (col, row) in sheet.cells:
                _fail("duplicate cell key", location)
            sheet.cells[(col, row)] = _cell_from_spec(CellAddress(sheet.name, col, row), spec, location, resolve)

    wb.tables = tuple(_tables_from_doc(doc.get("tables"), wb, source))
    return wb


def _cell_from_spec(addr: CellAddress, spec: object, location: str, resolve) -> Cell:
    if not isinstance(spec, dict):
        _fail("cell entry must be an object", location)
    unknown = set(spec) - _CELL_KEYS
    if unknown:
        _fail(f"unknown cell keys {sorted(unknown)}", location)
    if "v" in spec and "f" in spec:
        _fail("cell has both a literal and a formula", location)
    annotations = {}
    for key, attr in (("src", "data_source"), ("fmt", "format")):
        if key in spec:
            if not isinstance(spec[key], str):
                _fail(f"'{key}' must be a string", location)
            annotations[attr] = spec[key]
    if "f" in spec:
        text = spec["f"]
        if not isinstance(text, str) or not text.startswith("="):
            _fail("formula must be a string starting with '='", location)
        try:
            ast = parse_formula(text, addr.sheet, resolve)
        except ParseError as exc:
            raise ParseError(exc.message, location=location, position=exc.position) from None
        except UnresolvedSheet as exc:
            raise UnresolvedSheet(exc.name, location) from None
        return Cell(addr, formula=text, ast=ast, **annotations)
    try:
        value = decode_literal(spec.get("v"))
    except (ValueError, TypeError, KeyError) as exc:
        _fail(f"bad literal: {exc}", location)
    return Cell(addr, value=value, **annotations)


def _tables_from_doc(raw: object, wb: Workbook, source: str | None) -> list[TableDecl]:
    if raw is None:
        return []
    if not isinstance(raw, list):
        _fail("'tables' must be a list", source)
    tables = []
    for entry in raw:
        if not isinstance(entry, dict) or set(entry) != {"anchor", "direction", "capacity"}:
            _fail("table entries need exactly anchor, direction, capacity", source)
        try:
            anchor = a1_to_address(entry["anchor"], "")
        except MalformedAddress as exc:
            _fail(f"table anchor: {exc}", source)
        anchor = CellAddress(wb.canonical_sheet(anchor.sheet), anchor.col, anchor.row)
        if entry["direction"] not in DIRECTIONS:
            _fail(f"table direction must be one of {DIRECTIONS}", source)
        capacity = entry["capacity"]
        if not isinstance(capacity, int) or isinstance(capacity, bool) or capacity < 1:
            _fail("table capacity must be a positive integer", source)
        tables.append(TableDecl(anchor, entry["direction"], capacity))
    return tables


def load_workbook(path: str | Path) -> Workbook:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", location=f"{path}:{exc.lineno}:{exc.colno}") from None
    return workbook_from_dict(doc, source=str(path))


def cell_to_spec(cell: Cell) -> dict[str, object]:
    spec: dict[str, object] = {}
    if cell.is_formula:
        spec["f"] = cell.formula
    elif cell.value is not None:
        spec["v"] = encode_literal(cell.value)
    if cell.data_source is not None:
        spec["src"] = cell.data_source
    if cell.format is not None:
        spec["fmt"] = cell.format
    return spec


def workbook_to_dict(wb: Workbook) -> dict[str, object]:
    doc: dict[str, object] = {
        "file": wb.file_name,
        "sheets": [
            {"name": sheet.name, "cells": {cell.address.a1: cell_to_spec(cell) for cell in sheet}}
            for sheet in wb.sheets.values()
        ],
    }
    if wb.tables:
        doc["tables"] = [
            {"anchor": address_to_a1(t.anchor, True), "direction": t.direction, "capacity": t.capacity}
            for t in wb.tables
        ]
    return doc


def dumps_canonical(doc: object) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def save_workbook(wb: Workbook, path: str | Path) -> None:
    Path(path).write_text(dumps_canonical(workbook_to_dict(wb)), encoding="utf-8")


def canonicalize_document(doc: dict) -> dict:
    """Canonical form of a raw workbook document, computed without loading it.

    Integral numbers lose their fraction, ``"v": null`` is dropped, cell keys
    and table anchors are upper-cased with ``$`` removed, and an empty
    ``tables`` list disappears.
    """
    names = {s["name"].casefold(): s["name"] for s in doc["sheets"]}
    out: dict[str, object] = {"file": doc["file"], "sheets": []}
    for raw in doc["sheets"]:
        cells = {}
        for key, spec in raw.get("cells", {}).items():
            col, row = parse_a1(key)
            spec = {k: _canonical_json_value(v) for k, v in spec.items() if not (k == "v" and v is None)}
            cells[CellAddress(raw["name"], col, row).a1] = spec
        out["sheets"].append({"name": raw["name"], "cells": cells})
    if doc.get("tables"):
        tables = []
        for t in doc["tables"]:
            anchor = a1_to_address(t["anchor"], "")
            anchor = CellAddress(names[anchor.sheet.casefold()], anchor.col, anchor.row)
            tables.append({**t, "anchor": address_to_a1(anchor, True)})
        out["tables"] = tables
    return out


def _canonical_json_value(v: object) -> object:
    if isinstance(v, float) and v.is_integer() and abs(v) < 1e16:
        return int(v)
    if isinstance(v, dict):
        return {k: _canonical_json_value(x) for k, x in v.items()}
    return v
