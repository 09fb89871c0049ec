"""Schema generation: dependency graph, input/output classification,
referred-sheet crawl, table detection, annotation and the schema CSV."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import re
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

from .address import CellAddress, address_to_a1, parse_a1
from .errors import ConflictingTable, MalformedAddress, SchemaFormatError, UnresolvedSheet
from .formula import Evaluator, extract_refs
from .formula.nodes import RangeRef
from .formula.refs import iter_references
from .values import ErrorValue, is_number
from .workbook import COLUMN_WISE, DIRECTIONS, ROW_WISE, Workbook, get_cell

log = logging.getLogger(__name__)

INPUT = "Input"
OUTPUT = "Output"
APP_UI = "App UI"
UNSPECIFIED = "Unspecified"
LABELS = ("CS Sheet", "Field Type", "Cell ID", "Data Source", "Format")

FORMAT_RE = re.compile(r"^(?:Text|Date|(?:Number|Percentage|Currency)\[[0-9]\])$")
_CELL_ID_RE = re.compile(r"^([A-Z]+[1-9][0-9]*)(RowWise|ColumnWise)?$")


@dataclass
class DependencyGraph:
    """Edges run from a referred cell to the cell whose formula refers to it."""

    nodes: set[CellAddress] = field(default_factory=set)
    edges: set[tuple[CellAddress, CellAddress]] = field(default_factory=set)
    referred_sheets: list[str] = field(default_factory=list)

    def sources(self) -> set[CellAddress]:
        return {src for src, _ in self.edges}

    def destinations(self) -> set[CellAddress]:
        return {dst for _, dst in self.edges}

    def merge(self, other: DependencyGraph) -> None:
        self.nodes |= other.nodes
        self.edges |= other.edges
        for name in other.referred_sheets:
            if name not in self.referred_sheets:
                self.referred_sheets.append(name)


def build_graph(wb: Workbook, sheet: str) -> DependencyGraph:
    sh = wb.sheet(sheet)
    graph = DependencyGraph()
    home = sh.name.casefold()
    for cell in sh:
        if cell.is_empty:
            continue
        graph.nodes.add(cell.address)
        if not cell.is_formula:
            continue
        for ref in iter_references(cell.ast):
            ref_sheet = ref.address.sheet if not isinstance(ref, RangeRef) else ref.sheet
            if ref_sheet.casefold() != home and ref_sheet not in graph.referred_sheets:
                graph.referred_sheets.append(ref_sheet)
        for referred in extract_refs(cell.ast, sh.name).cells:
            graph.nodes.add(referred)
            graph.edges.add((referred, cell.address))
    return graph


def classify(graph: DependencyGraph) -> tuple[list[CellAddress], list[CellAddress]]:
    """Inputs are pure sources, outputs pure destinations; ordered by (sheet, row, col)."""
    sources, destinations = graph.sources(), graph.destinations()
    inputs = sorted(sources - destinations, key=CellAddress.sort_key)
    outputs = sorted(destinations - sources, key=CellAddress.sort_key)
    return inputs, outputs


@dataclass(frozen=True)
class SchemaRecord:
    cs_sheet: str
    field_type: str
    cell_id: str
    data_source: str
    format: str

    def __post_init__(self) -> None:
        if self.cs_sheet.count("$") != 1 or self.cs_sheet.startswith("$") or self.cs_sheet.endswith("$"):
            raise SchemaFormatError(f"CS Sheet must be 'file$tab', got {self.cs_sheet!r}")
        if self.field_type not in (INPUT, OUTPUT):
            raise SchemaFormatError(f"Field Type must be Input or Output, got {self.field_type!r}")
        if not _CELL_ID_RE.match(self.cell_id):
            raise SchemaFormatError(f"bad Cell ID {self.cell_id!r}")
        if self.field_type == OUTPUT and self.data_source != APP_UI:
            raise SchemaFormatError(f"output {self.cell_id} must come from {APP_UI!r}")
        if not FORMAT_RE.match(self.format):
            raise SchemaFormatError(f"bad Format {self.format!r}")

    @property
    def tab(self) -> str:
        return self.cs_sheet.split("$", 1)[1]

    @property
    def file(self) -> str:
        return self.cs_sheet.split("$", 1)[0]

    @property
    def a1(self) -> str:
        return _CELL_ID_RE.match(self.cell_id).group(1)

    @property
    def direction(self) -> str | None:
        return _CELL_ID_RE.match(self.cell_id).group(2)

    @property
    def is_table(self) -> bool:
        return self.direction is not None

    @property
    def address(self) -> CellAddress:
        col, row = parse_a1(self.a1)
        return CellAddress(self.tab, col, row)

    @property
    def key(self) -> tuple[str, str]:
        return (self.cs_sheet, self.cell_id)


@dataclass(frozen=True)
class TableSpec:
    anchor: CellAddress
    direction: str
    capacity: int | None

    def cells(self) -> list[CellAddress]:
        if self.capacity is None:
            return [self.anchor]
        step = (1, 0) if self.direction == ROW_WISE else (0, 1)
        return [self.anchor.offset(rows=i * step[0], cols=i * step[1]) for i in range(self.capacity)]


@dataclass(frozen=True)
class SchemaExtraction:
    """Result of schema generation.

    Equality covers the crawled sheet order and the records; classification
    detail and warnings are informational.
    """

    sheets: tuple[str, ...]
    records: tuple[SchemaRecord, ...] = ()
    inputs: tuple[CellAddress, ...] = field(default=(), compare=False)
    outputs: tuple[CellAddress, ...] = field(default=(), compare=False)
    tables: tuple[TableSpec, ...] = field(default=(), compare=False)
    warnings: tuple[str, ...] = field(default=(), compare=False)

    @property
    def root(self) -> str | None:
        return self.sheets[0] if self.sheets else None

    @property
    def referred_sheets(self) -> tuple[str, ...]:
        return self.sheets[1:]

    @property
    def input_records(self) -> list[SchemaRecord]:
        return [r for r in self.records if r.field_type == INPUT]

    @property
    def output_records(self) -> list[SchemaRecord]:
        return [r for r in self.records if r.field_type == OUTPUT]

    @classmethod
    def from_records(cls, records) -> SchemaExtraction:
        records = tuple(records)
        sheets: list[str] = []
        for r in records:
            if r.tab not in sheets:
                sheets.append(r.tab)
        return cls(
            sheets=tuple(sheets),
            records=records,
            inputs=tuple(r.address for r in records if r.field_type == INPUT),
            outputs=tuple(r.address for r in records if r.field_type == OUTPUT),
            tables=tuple(TableSpec(r.address, r.direction, None) for r in records if r.is_table),
        )


def crawl_referred_sheets(wb: Workbook, root: str) -> SchemaExtraction:
    """Breadth-first walk over referred sheets, classifying each sheet's cells.

    Each sheet is processed once. Classification runs over the union of the
    graphs of every crawled sheet, so a cell referenced only from another
    crawled sheet is still seen as referred.
    """
    root = wb.canonical_sheet(root)
    queue = deque([root])
    queued = {root.casefold()}
    order: list[str] = []
    combined = DependencyGraph()
    while queue:
        name = queue.popleft()
        order.append(name)
        graph = build_graph(wb, name)
        combined.merge(graph)
        for rs in graph.referred_sheets:
            if rs.casefold() not in wb.sheets:
                raise UnresolvedSheet(rs, name)
            if rs.casefold() not in queued:
                queued.add(rs.casefold())
                queue.append(rs)
    inputs, outputs = classify(combined)
    rank = {name: i for i, name in enumerate(order)}
    by_sheet = lambda a: (rank[a.sheet], a.row, a.col)  # noqa: E731
    return SchemaExtraction(
        sheets=tuple(order),
        inputs=tuple(sorted(inputs, key=by_sheet)),
        outputs=tuple(sorted(outputs, key=by_sheet)),
    )


def _runs(cells: list[CellAddress], keep: set[CellAddress]) -> list[list[CellAddress]]:
    runs, current = [], []
    for addr in cells:
        if addr in keep:
            current.append(addr)
        else:
            if len(current) >= 2:
                runs.append(current)
            current = []
    if len(current) >= 2:
        runs.append(current)
    return runs


def detect_tables(wb: Workbook, extraction: SchemaExtraction) -> SchemaExtraction:
    """Find table inputs: declared tables plus range-summed runs of inputs.

    A vertical run becomes a RowWise table, a horizontal run ColumnWise.
    """
    crawled = {s.casefold() for s in extraction.sheets}
    inputs = set(extraction.inputs)
    tables: list[TableSpec] = []
    claimed: set[CellAddress] = set()
    for decl in wb.tables:
        if decl.anchor.sheet.casefold() in crawled:
            tables.append(TableSpec(decl.anchor, decl.direction, decl.capacity))
            claimed.update(decl.cells())

    # (sheet, direction, line) -> set of positions along the line
    segments: dict[tuple[str, str, int], set[int]] = {}
    runs_found: list[tuple[tuple[str, str, int], list[int]]] = []
    for sheet_name in extraction.sheets:
        for cell in wb.sheet(sheet_name):
            if not cell.is_formula:
                continue
            for ref in iter_references(cell.ast):
                if not isinstance(ref, RangeRef):
                    continue
                height, width = ref.shape
                if (height == 1) == (width == 1):
                    continue  # single cell or 2-D block
                direction = ROW_WISE if width == 1 else COLUMN_WISE
                for run in _runs(ref.cells(), inputs - claimed):
                    if direction == ROW_WISE:
                        key, positions = (ref.sheet, direction, run[0].col), [a.row for a in run]
                    else:
                        key, positions = (ref.sheet, direction, run[0].row), [a.col for a in run]
                    runs_found.append((key, positions))

    # merge overlapping runs on the same line into maximal intervals
    for key, positions in runs_found:
        segments.setdefault(key, set()).update(positions)
    owner: dict[CellAddress, str] = {}
    for (sheet, direction, line), positions in sorted(segments.items()):
        ordered = sorted(positions)
        groups: list[list[int]] = [[ordered[0]]]
        for p in ordered[1:]:
            if p == groups[-1][-1] + 1:
                groups[-1].append(p)
            else:
                groups.append([p])
        for group in groups:
            if direction == ROW_WISE:
                members = [CellAddress(sheet, line, p) for p in group]
            else:
                members = [CellAddress(sheet, p, line) for p in group]
            for m in members:
                if owner.get(m, direction) != direction:
                    raise ConflictingTable(f"{address_to_a1(m, True)} belongs to both a RowWise and a ColumnWise table")
                owner[m] = direction
            tables.append(TableSpec(members[0], direction, len(members)))

    tables.sort(key=lambda t: t.anchor.sort_key())
    return replace(extraction, tables=tuple(tables))


def infer_format(value: object) -> str:
    if isinstance(value, bool):
        return "Text"
    if is_number(value) or isinstance(value, ErrorValue):
        return "Number[2]"
    if isinstance(value, dt.date):
        return "Date"
    return "Text"


def annotate(wb: Workbook, extraction: SchemaExtraction, neighbor_annotations: bool = False) -> SchemaExtraction:
    """Attach data source and format to every field and build the records."""
    warnings = list(extraction.warnings)
    member_of: dict[CellAddress, TableSpec] = {}
    for table in extraction.tables:
        for addr in table.cells():
            member_of[addr] = table
    anchors = {t.anchor: t for t in extraction.tables}
    rank = {name: i for i, name in enumerate(extraction.sheets)}

    fields: list[tuple[CellAddress, str, str | None]] = []  # (addr, type, direction)
    for addr in extraction.inputs:
        if addr in member_of and addr not in anchors:
            continue
        fields.append((addr, INPUT, anchors[addr].direction if addr in anchors else None))
    for addr in anchors:
        if addr not in extraction.inputs:
            fields.append((addr, INPUT, anchors[addr].direction))
    for addr in extraction.outputs:
        fields.append((addr, OUTPUT, None))
    fields.sort(key=lambda f: (rank[f[0].sheet], f[1] != INPUT, f[0].row, f[0].col))

    evaluator = None
    records = []
    for addr, field_type, direction in fields:
        cell = get_cell(wb, addr)
        where = address_to_a1(addr, True)
        if field_type == OUTPUT:
            source = APP_UI
        else:
            source = cell.data_source
            if source is None and neighbor_annotations:
                neighbor = get_cell(wb, addr.offset(cols=1))
                if isinstance(neighbor.value, str) and neighbor.value.strip() and not neighbor.is_formula:
                    source = neighbor.value.strip()
            if source is None:
                source = UNSPECIFIED
                warnings.append(f"{where}: no data source annotation; using {UNSPECIFIED!r}")
        fmt = cell.format
        if fmt is not None and not FORMAT_RE.match(fmt):
            warnings.append(f"{where}: ignoring malformed format {fmt!r}")
            fmt = None
        if fmt is None:
            if cell.is_formula:
                evaluator = evaluator or Evaluator(wb)
                fmt = infer_format(evaluator.value(addr))
            else:
                fmt = infer_format(cell.value)
            warnings.append(f"{where}: no format annotation; inferred {fmt}")
        cs_sheet = f"{wb.file_name}${addr.sheet}"
        try:
            records.append(SchemaRecord(cs_sheet, field_type, addr.a1 + (direction or ""), source, fmt))
        except SchemaFormatError as exc:
            raise SchemaFormatError(f"{where}: {exc}") from None
    for w in warnings[len(extraction.warnings):]:
        log.warning(w)
    return replace(extraction, records=tuple(records), warnings=tuple(warnings))


def generate_schema(wb: Workbook, root: str, neighbor_annotations: bool = False) -> SchemaExtraction:
    """Crawl, detect tables and annotate in one go."""
    extraction = crawl_referred_sheets(wb, root)
    extraction = detect_tables(wb, extraction)
    return annotate(wb, extraction, neighbor_annotations=neighbor_annotations)


def table_capacities(wb: Workbook, root: str) -> dict[CellAddress, TableSpec]:
    """Anchor -> table, re-derived from the workbook (the CSV does not carry capacity)."""
    extraction = detect_tables(wb, crawl_referred_sheets(wb, root))
    return {t.anchor: t for t in extraction.tables}


# -- CSV ---------------------------------------------------------------------

def schema_to_csv(extraction: SchemaExtraction) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    columns = [
        [r.cs_sheet for r in extraction.records],
        [r.field_type for r in extraction.records],
        [r.cell_id for r in extraction.records],
        [r.data_source for r in extraction.records],
        [r.format for r in extraction.records],
    ]
    for label, values in zip(LABELS, columns):
        writer.writerow([label, *values])
    return buf.getvalue()


def emit_schema(extraction: SchemaExtraction, path: str | Path) -> None:
    Path(path).write_text(schema_to_csv(extraction), encoding="utf-8", newline="")


def schema_from_csv(text: str) -> SchemaExtraction:
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if len(rows) == 5 and tuple(r[0] for r in rows) == LABELS:
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise SchemaFormatError("ragged schema columns")
        raw = [tuple(r[i] for r in rows) for i in range(1, width)]
    elif rows and tuple(rows[0]) == LABELS:
        raw = [tuple(r) for r in rows[1:]]
        if any(len(r) != len(LABELS) for r in raw):
            raise SchemaFormatError("ragged schema rows")
    else:
        raise SchemaFormatError(f"schema must be labelled {', '.join(LABELS)}")
    try:
        records = [SchemaRecord(*r) for r in raw]
    except MalformedAddress as exc:
        raise SchemaFormatError(str(exc)) from None
    return SchemaExtraction.from_records(records)


def parse_schema(path: str | Path) -> SchemaExtraction:
    return schema_from_csv(Path(path).read_text(encoding="utf-8"))


__all__ = [
    "APP_UI",
    "DIRECTIONS",
    "DependencyGraph",
    "INPUT",
    "LABELS",
    "OUTPUT",
    "SchemaExtraction",
    "SchemaRecord",
    "TableSpec",
    "annotate",
    "build_graph",
    "classify",
    "crawl_referred_sheets",
    "detect_tables",
    "emit_schema",
    "generate_schema",
    "parse_schema",
    "schema_from_csv",
    "schema_to_csv",
    "table_capacities",
]
