"""Batch-wise validation of many policies against many CS sheets."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

from .errors import BvcsError, IoError, ManifestError
from .formula import cyclic_cells
from .schema import SchemaExtraction, generate_schema, parse_schema, table_capacities
from .sources import Issue, load_bindings, match_bindings
from .validator import ERROR, FAILED, PASSED, validate_policy
from .workbook import Workbook, load_workbook

log = logging.getLogger(__name__)

STATUSES = (PASSED, FAILED, ERROR)
CSV_HEADER = ("cs_sheet", "policy_id", "status", "mismatches", "duration_ms")


@dataclass(frozen=True)
class ManifestEntry:
    workbook_path: Path
    root_sheet: str
    bindings_path: Path
    policies: tuple[str, ...]
    schema_path: Path | None = None


@dataclass(frozen=True)
class BatchManifest:
    entries: tuple[ManifestEntry, ...]
    jobs: int = 1
    out_dir: Path = Path("bvcs-out")


@dataclass(frozen=True)
class BatchRow:
    cs_sheet: str
    policy_id: str
    status: str
    mismatches: int
    duration_ms: float = field(default=0.0, compare=False)
    evidence_html: Path | None = field(default=None, compare=False)
    issues: tuple[str, ...] = field(default=(), compare=False)


@dataclass
class BatchSummary:
    rows: list[BatchRow]
    wall_time_ms: float | None = None

    def totals(self) -> dict[str, dict[str, int]]:
        out: dict[str, dict[str, int]] = {}
        for row in self.rows:
            out.setdefault(row.cs_sheet, {s: 0 for s in STATUSES})[row.status] += 1
        return dict(sorted(out.items()))

    def counts(self) -> dict[str, int]:
        counts = {s: 0 for s in STATUSES}
        for row in self.rows:
            counts[row.status] += 1
        return counts

    def exit_code(self) -> int:
        statuses = {r.status for r in self.rows}
        if ERROR in statuses:
            return 2
        return 1 if FAILED in statuses else 0


# -- manifest --------------------------------------------------------------------

def _path(base: Path, value: object, what: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ManifestError(f"{what} must be a non-empty path string")
    p = Path(value)
    p = p if p.is_absolute() else base / p
    if not p.exists():
        raise ManifestError(f"{what} not found: {p}")
    return p


def _read_policies(path: Path) -> list[str]:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        policies = json.loads(text)
        if not isinstance(policies, list):
            raise ManifestError(f"{path}: expected a JSON list of policy ids")
        return [str(p) for p in policies]
    # one id per line, or a CSV whose first column holds ids under a header
    rows = [r for r in csv.reader(io.StringIO(text)) if r and r[0].strip()]
    if rows and rows[0][0].strip().lower() in ("policy_id", "policy"):
        rows = rows[1:]
    return [r[0].strip() for r in rows]


def manifest_from_dict(doc: object, base_dir: Path = Path(".")) -> BatchManifest:
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be an object")
    raw_entries = doc.get("entries")
    if not isinstance(raw_entries, list) or not raw_entries:
        raise ManifestError("manifest needs a non-empty 'entries' list")
    entries = []
    for i, raw in enumerate(raw_entries):
        where = f"entry #{i}"
        if not isinstance(raw, dict):
            raise ManifestError(f"{where}: must be an object")
        root = raw.get("root_sheet")
        if not isinstance(root, str) or not root:
            raise ManifestError(f"{where}: 'root_sheet' is required")
        if ("policies" in raw) == ("policies_file" in raw):
            raise ManifestError(f"{where}: give exactly one of 'policies' or 'policies_file'")
        if "policies" in raw:
            policies = raw["policies"]
            if not isinstance(policies, list) or not all(isinstance(p, (str, int)) for p in policies):
                raise ManifestError(f"{where}: 'policies' must be a list of ids")
            policies = [str(p) for p in policies]
        else:
            policies = _read_policies(_path(base_dir, raw["policies_file"], f"{where} policies_file"))
        if not policies:
            raise ManifestError(f"{where}: policy list is empty")
        if len(set(policies)) != len(policies):
            raise ManifestError(f"{where}: duplicate policy ids")
        schema = raw.get("schema_path")
        entries.append(
            ManifestEntry(
                workbook_path=_path(base_dir, raw.get("workbook_path"), f"{where} workbook_path"),
                root_sheet=root,
                bindings_path=_path(base_dir, raw.get("bindings_path"), f"{where} bindings_path"),
                policies=tuple(policies),
                schema_path=_path(base_dir, schema, f"{where} schema_path") if schema is not None else None,
            )
        )
    jobs = doc.get("jobs", 1)
    if not isinstance(jobs, int) or isinstance(jobs, bool) or jobs < 1:
        raise ManifestError("'jobs' must be a positive integer")
    out_dir = doc.get("out_dir", "bvcs-out")
    if not isinstance(out_dir, str) or not out_dir:
        raise ManifestError("'out_dir' must be a path string")
    out = Path(out_dir)
    return BatchManifest(tuple(entries), jobs, out if out.is_absolute() else base_dir / out)


def load_manifest(path: str | Path) -> BatchManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc.msg}") from None
    return manifest_from_dict(doc, base_dir=path.parent)


# -- preparation -------------------------------------------------------------------

_schema_cache: dict[tuple[str, str], SchemaExtraction] = {}
_schema_lock = threading.Lock()


def cached_schema(path: Path, wb: Workbook, root: str) -> SchemaExtraction:
    """Generate a schema once per workbook content and root sheet."""
    key = (hashlib.sha256(path.read_bytes()).hexdigest(), root.casefold())
    with _schema_lock:
        if key not in _schema_cache:
            _schema_cache[key] = generate_schema(wb, root)
        return _schema_cache[key]


@dataclass
class _Prepared:
    template: Workbook
    schema: SchemaExtraction
    bindings: dict
    capacities: dict
    cs_sheet: str
    policies: tuple[str, ...]


def _prepare(entry: ManifestEntry) -> _Prepared:
    where = str(entry.workbook_path)
    try:
        template = load_workbook(entry.workbook_path)
        root = template.canonical_sheet(entry.root_sheet)
        if entry.schema_path is not None:
            schema = parse_schema(entry.schema_path)
        else:
            schema = cached_schema(entry.workbook_path, template, root)
        matched = match_bindings(schema, load_bindings(entry.bindings_path))
        capacities = table_capacities(template, root)
        cyclic_cells(template)  # warm shared analysis before cloning across threads
    except BvcsError as exc:
        raise ManifestError(f"{where}: {exc}") from exc
    cs_sheet = schema.records[0].cs_sheet if schema.records else f"{template.file_name}${root}"
    return _Prepared(template, schema, matched, capacities, cs_sheet, entry.policies)


def _validate_one(prep: _Prepared, policy_id: str, out_dir: Path, timestamp: bool) -> BatchRow:
    started = time.perf_counter()
    try:
        run = validate_policy(
            prep.template,
            prep.schema,
            prep.bindings,
            policy_id,
            out_dir,
            capacities=prep.capacities,
            timestamp=timestamp,
        )
    except Exception as exc:  # a broken policy must never abort the batch
        log.exception("policy %s on %s failed", policy_id, prep.cs_sheet)
        issue = Issue(prep.cs_sheet, "-", type(exc).__name__, str(exc))
        return BatchRow(prep.cs_sheet, policy_id, ERROR, 0, (time.perf_counter() - started) * 1000.0, None, (str(issue),))
    return BatchRow(
        run.cs_sheet,
        policy_id,
        run.status,
        len(run.mismatches),
        run.duration_ms,
        run.html_path,
        tuple(str(i) for i in run.issues),
    )


def run_batch(
    manifest: BatchManifest,
    jobs: int | None = None,
    out_dir: str | Path | None = None,
    *,
    timestamp: bool = False,
    progress: bool = False,
) -> BatchSummary:
    """Validate every (sheet, policy) pair exactly once on a bounded thread pool."""
    started = time.perf_counter()
    jobs = jobs or manifest.jobs
    out = Path(out_dir) if out_dir is not None else manifest.out_dir
    prepared = [_prepare(e) for e in manifest.entries]
    pairs = [(p, policy) for p in prepared for policy in p.policies]
    seen = set()
    for p, policy in pairs:
        if (p.cs_sheet, policy) in seen:
            raise ManifestError(f"pair {p.cs_sheet} / {policy} listed twice")
        seen.add((p.cs_sheet, policy))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ManifestError(f"out_dir not writable: {exc}") from exc

    rows: list[BatchRow] = []
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_validate_one, p, policy, out, timestamp) for p, policy in pairs]
        for done, future in enumerate(as_completed(futures), start=1):
            rows.append(future.result())
            if progress:
                print(f"\r[{done}/{len(futures)}]", end="", file=sys.stderr, flush=True)
    if progress:
        print(file=sys.stderr)
    rows.sort(key=lambda r: (r.cs_sheet, r.policy_id))
    return BatchSummary(rows, (time.perf_counter() - started) * 1000.0)


# -- artifacts -------------------------------------------------------------------------

def summary_to_csv(summary: BatchSummary, timestamp: bool = False) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in summary.rows:
        duration = round(row.duration_ms) if timestamp else 0
        writer.writerow((row.cs_sheet, row.policy_id, row.status, row.mismatches, duration))
    return buf.getvalue()


def emit_summary_csv(summary: BatchSummary, path: str | Path, timestamp: bool = False) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(summary_to_csv(summary, timestamp), encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def emit_dashboard_html(summary: BatchSummary, out_dir: str | Path, timestamp: bool = False, name: str = "dashboard.html") -> Path:
    from .report import render_dashboard_html

    path = Path(out_dir) / name
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(render_dashboard_html(summary, path, timestamp), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def summary_from_runs(runs_dir: str | Path) -> BatchSummary:
    """Rebuild a summary from stored evidence files without revalidating."""
    rows = []
    for path in sorted(Path(runs_dir).rglob("*.evidence.json")):
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            cs_sheet, policy, status = doc["cs_sheet"], doc["policy"], doc["status"]
            mismatches = sum(1 for v in doc.get("verdicts", []) if not v.get("match"))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            log.warning("skipping unreadable evidence %s: %s", path, exc)
            continue
        html = path.with_name(path.name[: -len(".evidence.json")] + ".html")
        rows.append(BatchRow(cs_sheet, policy, status, mismatches, 0.0, html if html.exists() else None))
    rows.sort(key=lambda r: (r.cs_sheet, r.policy_id))
    return BatchSummary(rows)
