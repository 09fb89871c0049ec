import datetime as dt
import json
import socket
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from bvcs.errors import (
    AmbiguousData,
    BindingFormatError,
    MissingData,
    SourceUnavailable,
    TypeMismatch,
    UnboundField,
    UnknownAdapter,
)
from bvcs.schema import SchemaExtraction, SchemaRecord
from bvcs.sources import bindings_from_list, collect_policy, load_bindings, match_bindings, parse_field_value, resolve


@pytest.fixture
def wc_bindings(withdrawal_path):
    return {b.cell: b for b in load_bindings(withdrawal_path.parent / "bindings.json")}


def test_load_bindings(withdrawal_path):
    bindings = load_bindings(withdrawal_path.parent / "bindings.json")
    assert len(bindings) == 13
    assert bindings[0].base_dir == withdrawal_path.parent


def test_config_lookup(wc_bindings):
    assert resolve(wc_bindings["B11"], "P001", "Percentage[2]").value == pytest.approx(0.07)
    assert resolve(wc_bindings["B6"], "P001", "Percentage[2]").value == pytest.approx(0.10)


def test_config_is_policy_independent(wc_bindings):
    assert resolve(wc_bindings["B8"], "P001", "Number[0]") == resolve(wc_bindings["B8"], "P999", "Number[0]")
    assert resolve(wc_bindings["B8"], "P001", "Number[0]").values == (7.0,)


def test_multi_valued_premiums_are_ordered(wc_bindings):
    got = resolve(wc_bindings["C14RowWise"], "P001", "Number[2]")
    assert got.values == (1000.0, 500.0, 250.0)
    dates = resolve(wc_bindings["B14RowWise"], "P001", "Date").values
    assert list(dates) == sorted(dates)


def test_thousands_separator(wc_bindings):
    assert resolve(wc_bindings["B10"], "P001", "Number[2]").value == 8263.34


def test_provenance_names_the_policy(wc_bindings):
    assert "P002" in resolve(wc_bindings["B3"], "P002", "Number[2]").provenance
    assert "P002" in resolve(wc_bindings["H2"], "P002", "Number[2]").provenance


def test_resolution_is_pure(wc_bindings):
    first = [resolve(b, "P003", None) for b in wc_bindings.values()]
    second = [resolve(b, "P003", None) for b in wc_bindings.values()]
    assert first == second


def test_unknown_policy(wc_bindings):
    with pytest.raises(MissingData):
        resolve(wc_bindings["B3"], "P404", "Number[2]")
    with pytest.raises(MissingData):
        resolve(wc_bindings["H2"], "P404", "Number[2]")


def test_missing_ui_field(tmp_path):
    (tmp_path / "P1.json").write_text(json.dumps({"Screen": {"Other": 1}}))
    (b,) = bindings_from_list(
        [{"sheet": "S", "cell": "A1", "adapter": "ui_extract", "params": {"dir": ".", "screen": "Screen", "field": "X"}}],
        base_dir=tmp_path,
    )
    with pytest.raises(MissingData, match="no field 'X'"):
        resolve(b, "P1")


def test_ambiguous_without_multi(tmp_path):
    (tmp_path / "t.csv").write_text("id,v\nA,1\nA,2\n")
    (b,) = bindings_from_list(
        [{"sheet": "S", "cell": "A1", "adapter": "tabular", "params": {"file": "t.csv", "where": {"id": "{policy_id}"}, "select": "v"}}],
        base_dir=tmp_path,
    )
    with pytest.raises(AmbiguousData):
        resolve(b, "A")


def test_missing_file_is_unavailable(tmp_path):
    (b,) = bindings_from_list(
        [{"sheet": "S", "cell": "A1", "adapter": "config", "params": {"file": "nope.csv", "key": "k"}}], base_dir=tmp_path
    )
    with pytest.raises(SourceUnavailable):
        resolve(b, "P1")


@pytest.mark.parametrize(
    "entry, error",
    [
        ({"sheet": "S", "cell": "A1", "adapter": "ftp", "params": {}}, UnknownAdapter),
        (
            {"sheet": "S", "cell": "A1", "adapter": "tabular", "params": {"file": "x", "where": {"id": "{polcy_id}"}, "select": "v"}},
            BindingFormatError,
        ),
        ({"sheet": "S", "cell": "A1", "adapter": "config", "params": {"file": "x"}}, BindingFormatError),
        ({"sheet": "S", "cell": "A1", "adapter": "config", "params": {"file": "x", "key": "{policy_id}"}}, BindingFormatError),
        ({"sheet": "S", "cell": "A1", "adapter": "config", "params": {"file": "x", "key": "k", "extra": 1}}, BindingFormatError),
        ({"sheet": "S", "adapter": "config", "params": {"file": "x", "key": "k"}}, BindingFormatError),
        ({"sheet": "S", "cell": "A1", "adapter": "config", "multi": "yes", "params": {"file": "x", "key": "k"}}, BindingFormatError),
    ],
)
def test_bad_bindings(entry, error):
    with pytest.raises(error):
        bindings_from_list([entry])


def test_duplicate_binding():
    entry = {"sheet": "S", "cell": "A1", "adapter": "config", "params": {"file": "x", "key": "k"}}
    with pytest.raises(BindingFormatError, match="duplicate"):
        bindings_from_list([entry, entry])


@pytest.mark.parametrize(
    "raw, fmt, expected",
    [
        ("1,234.50", "Number[2]", 1234.5),
        ("$1,234.50", "Currency[2]", 1234.5),
        ("(12.00)", "Currency[2]", -12.0),
        ("7%", "Percentage[2]", 0.07),
        ("0.07", "Percentage[2]", 0.07),
        (3, "Number[0]", 3.0),
        ("2024-02-29", "Date", dt.date(2024, 2, 29)),
        (45292, "Date", dt.date(2024, 1, 1)),
        (" padded ", "Text", " padded "),
        (12.0, "Text", "12"),
    ],
)
def test_parse_field_value(raw, fmt, expected):
    got = parse_field_value(raw, fmt)
    assert got == pytest.approx(expected) if isinstance(expected, float) else got == expected


@pytest.mark.parametrize("raw, fmt", [("abc", "Number[2]"), ("15/01/2024", "Date"), (True, "Number[0]"), ([1], "Text")])
def test_parse_field_value_mismatch(raw, fmt):
    with pytest.raises(TypeMismatch):
        parse_field_value(raw, fmt)


def test_blank_is_missing():
    with pytest.raises(MissingData):
        parse_field_value("  ", "Number[2]")


def schema_of(*records):
    return SchemaExtraction.from_records(SchemaRecord(*r) for r in records)


def test_unbound_field_lists_every_gap():
    schema = schema_of(("b.wbk$S", "Input", "A1", "Database", "Number[2]"), ("b.wbk$S", "Input", "A2", "Database", "Text"))
    with pytest.raises(UnboundField) as info:
        match_bindings(schema, [])
    assert info.value.missing == [("b.wbk$S", "A1"), ("b.wbk$S", "A2")]


def test_tab_only_binding_matches():
    schema = schema_of(("b.wbk$S", "Input", "A1", "Database", "Number[2]"))
    bindings = bindings_from_list([{"sheet": "S", "cell": "A1", "adapter": "config", "params": {"file": "x", "key": "k"}}])
    assert match_bindings(schema, bindings)[("b.wbk$S", "A1")] is bindings[0]


def test_table_field_requires_multi():
    schema = schema_of(("b.wbk$S", "Input", "A1RowWise", "Database", "Number[2]"))
    bindings = bindings_from_list([{"sheet": "S", "cell": "A1RowWise", "adapter": "config", "params": {"file": "x", "key": "k"}}])
    with pytest.raises(BindingFormatError):
        match_bindings(schema, bindings)


# -- HTTP ------------------------------------------------------------------------


class PasHandler(BaseHTTPRequestHandler):
    docs = {"/policies/P1": {"policy": {"value": "1,500.25", "history": [10, 20]}}}
    hits: list[str] = []

    def do_GET(self):
        self.hits.append(self.path)
        if self.path == "/flaky":
            self.send_response(503)
            self.end_headers()
            return
        doc = self.docs.get(self.path)
        if doc is None:
            self.send_response(404)
            self.end_headers()
            return
        body = json.dumps(doc).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def pas_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), PasHandler)
    PasHandler.hits = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()
    server.server_close()


def http_binding(url, pointer="/policy/value", multi=False):
    return bindings_from_list(
        [{"sheet": "S", "cell": "A1", "adapter": "http", "multi": multi, "params": {"url_template": url, "pointer": pointer, "timeout_ms": 2000}}]
    )[0]


def test_http_fetch(pas_server):
    b = http_binding(pas_server + "/policies/{policy_id}")
    got = resolve(b, "P1", "Number[2]")
    assert got.value == 1500.25
    assert "P1" in got.provenance
    assert resolve(http_binding(pas_server + "/policies/{policy_id}", "/policy/history", multi=True), "P1").values == (10, 20)


def test_http_404_is_missing(pas_server):
    with pytest.raises(MissingData):
        resolve(http_binding(pas_server + "/policies/{policy_id}"), "P2")


def test_http_pointer_miss(pas_server):
    with pytest.raises(MissingData):
        resolve(http_binding(pas_server + "/policies/{policy_id}", "/policy/nope"), "P1")


def test_http_retries_then_gives_up(pas_server):
    with pytest.raises(SourceUnavailable):
        resolve(http_binding(pas_server + "/flaky"), "P1")
    assert PasHandler.hits.count("/flaky") == 3


def test_server_down_affects_only_its_field(tmp_path, pas_server):
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        dead = s.getsockname()[1]
    (tmp_path / "cfg.csv").write_text("key,value\nRate,0.5\n")
    schema = schema_of(("b.wbk$S", "Input", "A1", "Database", "Number[2]"), ("b.wbk$S", "Input", "A2", "Config Table", "Number[2]"))
    bindings = bindings_from_list(
        [
            {"sheet": "S", "cell": "A1", "adapter": "http", "params": {"url_template": f"http://127.0.0.1:{dead}/{{policy_id}}", "pointer": "/v", "timeout_ms": 500}},
            {"sheet": "S", "cell": "A2", "adapter": "config", "params": {"file": "cfg.csv", "key": "Rate"}},
        ],
        base_dir=tmp_path,
    )
    data = collect_policy(schema, bindings, "P1")
    assert [(i.cell_id, i.kind) for i in data.issues] == [("A1", "SourceUnavailable")]
    assert data.inputs[("b.wbk$S", "A2")].value == 0.5
