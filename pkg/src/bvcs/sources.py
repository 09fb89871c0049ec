"""Data collection: bindings file, adapters and per-policy field resolution."""

from __future__ import annotations

import csv
import datetime as dt
import functools
import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import (
    AmbiguousData,
    BindingFormatError,
    MissingData,
    ResolutionError,
    SourceUnavailable,
    TypeMismatch,
    UnboundField,
    UnknownAdapter,
)
from .schema import SchemaExtraction
from .values import CellValue, format_number, serial_to_date

log = logging.getLogger(__name__)

PLACEHOLDER = "{policy_id}"
_PLACEHOLDER_RE = re.compile(r"\{([^{}]*)\}")
_PRECISION_RE = re.compile(r"^(Number|Percentage|Currency)\[([0-9])\]$")

HTTP_RETRIES = 2
DEFAULT_TIMEOUT_MS = 5000
_http_slots = threading.BoundedSemaphore(8)


def set_http_concurrency(limit: int) -> None:
    """Bound the number of in-flight HTTP requests across all threads."""
    global _http_slots
    if limit < 1:
        raise ValueError("HTTP concurrency must be >= 1")
    _http_slots = threading.BoundedSemaphore(limit)


@dataclass(frozen=True)
class ResolvedValue:
    values: tuple[CellValue, ...]
    provenance: str

    @property
    def value(self) -> CellValue:
        return self.values[0]


@dataclass(frozen=True)
class Binding:
    sheet: str
    cell: str
    adapter: str
    params: Mapping[str, Any]
    multi: bool = False
    base_dir: Path = field(default=Path("."), compare=False)

    @property
    def key(self) -> tuple[str, str]:
        return (self.sheet, self.cell)

    def path(self, name: str) -> Path:
        p = Path(self.params[name])
        return p if p.is_absolute() else self.base_dir / p


# -- value parsing -------------------------------------------------------------

def _strip_currency(text: str) -> str:
    s = text.strip()
    negative = s.startswith("(") and s.endswith(")")
    if negative:
        s = s[1:-1].strip()
    s = s.lstrip("$€£").replace(",", "").strip()
    return "-" + s if negative else s


def parse_field_value(raw: object, fmt: str) -> CellValue:
    """Convert a raw source value into a cell value under a schema format.

    Locale is fixed: period decimal separator, comma thousands separator.
    """
    if raw is None or (isinstance(raw, str) and not raw.strip() and fmt != "Text"):
        raise MissingData(f"empty value for format {fmt}")
    if fmt == "Text":
        if isinstance(raw, bool):
            return "TRUE" if raw else "FALSE"
        if isinstance(raw, (int, float)):
            return format_number(float(raw))
        if isinstance(raw, dict) and set(raw) == {"d"}:
            return str(raw["d"])
        if isinstance(raw, str):
            return raw
        raise TypeMismatch(f"cannot read {raw!r} as Text")
    if fmt == "Date":
        if isinstance(raw, dict) and set(raw) == {"d"}:
            raw = raw["d"]
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return serial_to_date(float(raw))
        if isinstance(raw, str):
            try:
                return dt.date.fromisoformat(raw.strip())
            except ValueError:
                pass
        raise TypeMismatch(f"cannot read {raw!r} as Date (expected YYYY-MM-DD)")
    m = _PRECISION_RE.match(fmt)
    if not m:
        raise TypeMismatch(f"unknown format {fmt!r}")
    if isinstance(raw, bool):
        raise TypeMismatch(f"cannot read boolean {raw!r} as {fmt}")
    if isinstance(raw, (int, float)):
        return float(raw)
    if not isinstance(raw, str):
        raise TypeMismatch(f"cannot read {raw!r} as {fmt}")
    text = _strip_currency(raw)
    scale = 1.0
    if m.group(1) == "Percentage" and text.endswith("%"):
        text, scale = text[:-1].strip(), 0.01
    try:
        return float(text) * scale
    except ValueError:
        raise TypeMismatch(f"cannot read {raw!r} as {fmt}") from None


# -- adapters -----------------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _read_table(path: str, mtime_ns: int, size: int) -> tuple[tuple[str, ...], tuple[dict[str, str], ...]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = tuple(dict(r) for r in reader)
        return tuple(reader.fieldnames or ()), rows


def read_table(path: Path):
    try:
        st = os.stat(path)
        return _read_table(str(path), st.st_mtime_ns, st.st_size)
    except OSError as exc:
        raise SourceUnavailable(f"cannot read {path}: {exc.strerror or exc}") from None


def _sort_key(text: str):
    try:
        return (0, float(text.replace(",", "")), "")
    except ValueError:
        return (1, 0.0, text)


def _substitute(value: str, policy_id: str) -> str:
    return value.replace(PLACEHOLDER, policy_id)


class Adapter:
    name = ""
    required: frozenset[str] = frozenset()
    optional: frozenset[str] = frozenset()

    def check(self, params: Mapping[str, Any], where: str) -> None:
        missing = self.required - set(params)
        unknown = set(params) - self.required - self.optional
        if missing:
            raise BindingFormatError(f"{where}: {self.name} binding missing params {sorted(missing)}")
        if unknown:
            raise BindingFormatError(f"{where}: {self.name} binding has unknown params {sorted(unknown)}")

    def fetch(self, binding: Binding, policy_id: str) -> tuple[list[object], str]:
        raise NotImplementedError


class TabularAdapter(Adapter):
    """Filter rows of a CSV table and project one column."""

    name = "tabular"
    required = frozenset({"file", "where", "select"})
    optional = frozenset({"order_by"})

    def check(self, params, where):
        super().check(params, where)
        if not isinstance(params["where"], dict) or not params["where"]:
            raise BindingFormatError(f"{where}: tabular 'where' must be a non-empty object")

    def fetch(self, binding, policy_id):
        path = binding.path("file")
        columns, rows = read_table(path)
        params = binding.params
        conditions = {col: _substitute(str(v), policy_id) for col, v in params["where"].items()}
        needed = set(conditions) | {params["select"]} | ({params["order_by"]} if params.get("order_by") else set())
        absent = needed - set(columns)
        if absent:
            raise SourceUnavailable(f"{path.name} has no column(s) {sorted(absent)}")
        matched = [r for r in rows if all(r[c] == v for c, v in conditions.items())]
        if params.get("order_by"):
            matched.sort(key=lambda r: _sort_key(r[params["order_by"]]))
        clause = " AND ".join(f"{c}={v!r}" for c, v in sorted(conditions.items()))
        provenance = f"tabular:{path.name}[{clause}].{params['select']}"
        return [r[params["select"]] for r in matched], provenance


class ConfigAdapter(Adapter):
    """Key/value lookup in a two-column CSV; the first row is a header."""

    name = "config"
    required = frozenset({"file", "key"})

    def check(self, params, where):
        super().check(params, where)
        if PLACEHOLDER in str(params["key"]):
            raise BindingFormatError(f"{where}: config keys cannot depend on the policy")

    def fetch(self, binding, policy_id):
        path = binding.path("file")
        columns, rows = read_table(path)
        if len(columns) != 2:
            raise SourceUnavailable(f"{path.name}: config table must have exactly two columns")
        key_col, value_col = columns
        key = str(binding.params["key"])  # config is policy-independent by contract
        values = [r[value_col] for r in rows if r[key_col] == key]
        return values, f"config:{path.name}[{key}]"


class UiExtractAdapter(Adapter):
    """Per-policy screen capture document ``<dir>/<policy_id>.json``."""

    name = "ui_extract"
    required = frozenset({"dir", "screen", "field"})

    def fetch(self, binding, policy_id):
        path = binding.path("dir") / f"{policy_id}.json"
        screen = _substitute(binding.params["screen"], policy_id)
        name = _substitute(binding.params["field"], policy_id)
        provenance = f"ui_extract:{path.name}[{screen}/{name}]"
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise MissingData(f"no UI capture for policy {policy_id} ({path})") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise SourceUnavailable(f"cannot read {path}: {exc}") from None
        fields = doc.get(screen) if isinstance(doc, dict) else None
        if not isinstance(fields, dict) or name not in fields:
            raise MissingData(f"screen {screen!r} has no field {name!r} for policy {policy_id}")
        value = fields[name]
        return (list(value) if isinstance(value, list) else [value]), provenance


def resolve_pointer(doc: object, pointer: str) -> object:
    """Follow a slash-delimited pointer (``/a/b/0``); ``~1`` and ``~0`` escape."""
    node = doc
    for part in [p for p in pointer.split("/") if p != ""]:
        part = part.replace("~1", "/").replace("~0", "~")
        if isinstance(node, dict) and part in node:
            node = node[part]
        elif isinstance(node, list) and part.isdigit() and int(part) < len(node):
            node = node[int(part)]
        else:
            raise MissingData(f"pointer {pointer!r} not found in response")
    return node


class HttpAdapter(Adapter):
    """GET a JSON document from a (mock) policy administration service."""

    name = "http"
    required = frozenset({"url_template", "pointer"})
    optional = frozenset({"timeout_ms"})

    def fetch(self, binding, policy_id):
        url = binding.params["url_template"].replace(PLACEHOLDER, urllib.parse.quote(policy_id, safe=""))
        pointer = _substitute(binding.params["pointer"], policy_id)
        timeout = binding.params.get("timeout_ms", DEFAULT_TIMEOUT_MS) / 1000.0
        provenance = f"http:{url}#{pointer}"
        last_error = None
        for attempt in range(HTTP_RETRIES + 1):
            try:
                with _http_slots:
                    with urllib.request.urlopen(url, timeout=timeout) as resp:
                        body = resp.read()
                break
            except urllib.error.HTTPError as exc:
                if exc.code == 404:
                    raise MissingData(f"{url} returned 404") from None
                last_error = f"HTTP {exc.code}"
            except (urllib.error.URLError, OSError) as exc:
                last_error = str(getattr(exc, "reason", exc))
            if attempt < HTTP_RETRIES:
                time.sleep(0.05 * (attempt + 1))
        else:
            raise SourceUnavailable(f"{url}: {last_error} after {HTTP_RETRIES} retries")
        try:
            doc = json.loads(body)
        except json.JSONDecodeError:
            raise SourceUnavailable(f"{url}: response is not JSON") from None
        value = resolve_pointer(doc, pointer)
        return (list(value) if isinstance(value, list) else [value]), provenance


ADAPTERS: dict[str, Adapter] = {a.name: a for a in (TabularAdapter(), ConfigAdapter(), UiExtractAdapter(), HttpAdapter())}


# -- bindings ------------------------------------------------------------------

def _check_placeholders(value: object, where: str) -> None:
    if isinstance(value, str):
        for name in _PLACEHOLDER_RE.findall(value):
            if name != "policy_id":
                raise BindingFormatError(f"{where}: unknown placeholder {{{name}}}")
    elif isinstance(value, dict):
        for v in value.values():
            _check_placeholders(v, where)
    elif isinstance(value, list):
        for v in value:
            _check_placeholders(v, where)


def bindings_from_list(raw: object, base_dir: Path = Path(".")) -> list[Binding]:
    if not isinstance(raw, list):
        raise BindingFormatError("bindings document must be a list")
    bindings, seen = [], set()
    for i, entry in enumerate(raw):
        where = f"binding #{i}"
        if not isinstance(entry, dict):
            raise BindingFormatError(f"{where}: must be an object")
        unknown = set(entry) - {"sheet", "cell", "adapter", "multi", "params"}
        if unknown:
            raise BindingFormatError(f"{where}: unknown keys {sorted(unknown)}")
        for key in ("sheet", "cell", "adapter"):
            if not isinstance(entry.get(key), str) or not entry[key]:
                raise BindingFormatError(f"{where}: '{key}' must be a non-empty string")
        where = f"binding {entry['sheet']}:{entry['cell']}"
        adapter = ADAPTERS.get(entry["adapter"])
        if adapter is None:
            raise UnknownAdapter(f"{where}: unknown adapter {entry['adapter']!r}")
        params = entry.get("params", {})
        if not isinstance(params, dict):
            raise BindingFormatError(f"{where}: 'params' must be an object")
        multi = entry.get("multi", False)
        if not isinstance(multi, bool):
            raise BindingFormatError(f"{where}: 'multi' must be a boolean")
        adapter.check(params, where)
        _check_placeholders(params, where)
        binding = Binding(entry["sheet"], entry["cell"], entry["adapter"], params, multi, base_dir)
        if binding.key in seen:
            raise BindingFormatError(f"{where}: duplicate binding")
        seen.add(binding.key)
        bindings.append(binding)
    return bindings


def load_bindings(path: str | Path) -> list[Binding]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BindingFormatError(f"{path}: invalid JSON: {exc.msg}") from None
    return bindings_from_list(raw, base_dir=path.parent)


def resolve(binding: Binding, policy_id: str, fmt: str | None = None) -> ResolvedValue:
    """Fetch a field's value(s) for one policy, parsed under ``fmt`` when given."""
    raw, provenance = ADAPTERS[binding.adapter].fetch(binding, policy_id)
    if not raw:
        raise MissingData(f"no value for policy {policy_id} ({provenance})")
    if not binding.multi and len(raw) > 1:
        raise AmbiguousData(f"{len(raw)} values for policy {policy_id} ({provenance})")
    values = tuple(parse_field_value(v, fmt) for v in raw) if fmt else tuple(raw)
    return ResolvedValue(values, provenance)


@dataclass(frozen=True)
class Issue:
    cs_sheet: str
    cell_id: str
    kind: str
    message: str

    def __str__(self) -> str:
        return f"{self.kind} {self.cs_sheet}:{self.cell_id}: {self.message}"

    def to_dict(self) -> dict[str, str]:
        return {"cs_sheet": self.cs_sheet, "cell_id": self.cell_id, "kind": self.kind, "message": self.message}


@dataclass
class PolicyData:
    inputs: dict[tuple[str, str], ResolvedValue]
    pas_outputs: dict[tuple[str, str], ResolvedValue]
    issues: list[Issue]


def match_bindings(schema: SchemaExtraction, bindings: list[Binding]) -> dict[tuple[str, str], Binding]:
    """Schema record key -> binding. Bindings may name the full ``file$tab`` or the tab alone."""
    by_key = {b.key: b for b in bindings}
    matched, missing = {}, []
    for record in schema.records:
        binding = by_key.get(record.key) or by_key.get((record.tab, record.cell_id))
        if binding is None:
            missing.append(record.key)
            continue
        if binding.multi != record.is_table:
            raise BindingFormatError(
                f"binding {record.cs_sheet}:{record.cell_id}: multi must be {str(record.is_table).lower()}"
            )
        matched[record.key] = binding
    if missing:
        raise UnboundField(missing)
    return matched


def collect_policy(
    schema: SchemaExtraction,
    bindings: list[Binding] | dict[tuple[str, str], Binding],
    policy_id: str,
) -> PolicyData:
    """Resolve every schema field for a policy; field failures become issues."""
    matched = bindings if isinstance(bindings, dict) else match_bindings(schema, bindings)
    data = PolicyData({}, {}, [])
    for record in schema.records:
        binding = matched[record.key]
        try:
            value = resolve(binding, policy_id, record.format)
        except ResolutionError as exc:
            data.issues.append(Issue(record.cs_sheet, record.cell_id, exc.kind, str(exc)))
            log.debug("policy %s: %s %s", policy_id, record.cell_id, exc)
            continue
        target = data.inputs if record.field_type == "Input" else data.pas_outputs
        target[record.key] = value
    return data


__all__ = [
    "ADAPTERS",
    "Binding",
    "Issue",
    "PolicyData",
    "ResolvedValue",
    "bindings_from_list",
    "collect_policy",
    "load_bindings",
    "match_bindings",
    "parse_field_value",
    "resolve",
    "resolve_pointer",
    "set_http_concurrency",
]
