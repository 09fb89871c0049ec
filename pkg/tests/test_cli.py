import json
import subprocess
import sys

from conftest import manifest_doc

from bvcs.cli import main


def test_schema_command(withdrawal_path, tmp_path, capsys):
    out = tmp_path / "schema.csv"
    assert main(["schema", str(withdrawal_path), "--root", "Main", "-o", str(out)]) == 0
    assert "11 inputs, 2 outputs" in capsys.readouterr().out
    assert out.read_text().splitlines()[2].startswith("Cell ID,B3,B4,B5")


def test_schema_command_bad_workbook(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"file": "x.wbk", "sheets": [{"name": "S", "cells": {"A1": {"f": "=SUM("}}}]}')
    assert main(["schema", str(bad), "--root", "S", "-o", str(tmp_path / "s.csv")]) == 2


def test_validate_statuses(make_store, tmp_path, capsys):
    store = make_store(faults={"P002": {"H2": 0.5}})
    common = ["validate", "--workbook", str(store.workbook), "--root", "Main", "--bindings", str(store.bindings), "--out", str(tmp_path / "ev"), "--no-timestamp"]
    assert main(common + ["--policy", "P001"]) == 0
    assert main(common + ["--policy", "P002"]) == 1
    assert main(common + ["--policy", "P777"]) == 2
    lines = capsys.readouterr().out.splitlines()
    assert lines == ["wc.wbk$Main P001 PASSED", "wc.wbk$Main P002 FAILED (1 mismatch)", "wc.wbk$Main P777 ERROR (10 issues)"]
    assert (tmp_path / "ev" / "wc.wbk$Main" / "P002.html").exists()


def test_validate_with_schema_file(make_store, tmp_path, capsys):
    store = make_store("surrender", n=2)
    schema = tmp_path / "schema.csv"
    assert main(["schema", str(store.workbook), "--root", "Main", "-o", str(schema)]) == 0
    args = ["validate", "--workbook", str(store.workbook), "--schema", str(schema), "--bindings", str(store.bindings), "--policy", "P002", "--out", str(tmp_path)]
    assert main(args) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "sv.wbk$Main P002 PASSED"


def test_epsilon_flag(make_store, tmp_path):
    store = make_store(n=1)
    args = ["validate", "--workbook", str(store.workbook), "--root", "Main", "--bindings", str(store.bindings), "--policy", "P001", "--out", str(tmp_path)]
    # the UI shows cents, so raw values agree to within half a cent
    assert main(args + ["--epsilon", "0.006"]) == 0


def test_batch_and_report(make_store, tmp_path, capsys):
    store = make_store(n=3, faults={"P003": {"H3": 1.0}})
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps(manifest_doc(store, out_dir=str(tmp_path / "out"))))
    assert main(["batch", "--manifest", str(manifest), "--jobs", "2", "--no-timestamp"]) == 1
    out = capsys.readouterr().out.splitlines()
    assert out == ["wc.wbk$Main P001 PASSED", "wc.wbk$Main P002 PASSED", "wc.wbk$Main P003 FAILED (1 mismatch)"]
    assert (tmp_path / "out" / "summary.csv").read_text().count("\n") == 4
    assert main(["report", "--runs", str(tmp_path / "out"), "--out", str(tmp_path / "dash.html"), "--no-timestamp"]) == 0
    assert "P003" in (tmp_path / "dash.html").read_text()


def test_bad_manifest_exit_code(tmp_path):
    (tmp_path / "m.json").write_text('{"entries": []}')
    assert main(["batch", "--manifest", str(tmp_path / "m.json")]) == 2
    assert main(["batch", "--manifest", str(tmp_path / "absent.json")]) == 2


def test_usage_errors():
    assert main([]) == 2
    assert main(["validate", "--policy", "P1"]) == 2
    assert main(["frobnicate"]) == 2


def test_module_entry_point(withdrawal_path, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "bvcs", "schema", str(withdrawal_path), "--root", "Main", "-o", str(tmp_path / "s.csv")],
        capture_output=True,
        text=True,
        env={"BVCS_LOG": "error", "PATH": ""},
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stderr == ""


def test_schema_missing_file(tmp_path):
    assert main(["schema", str(tmp_path / "nope.json"), "--root", "Main", "-o", str(tmp_path / "s.csv")]) == 2


def test_compat_neighbor_flag(tmp_path):
    wb = tmp_path / "n.json"
    wb.write_text(json.dumps({"file": "n.wbk", "sheets": [{"name": "S", "cells": {"A1": {"v": 1}, "B1": {"v": "Database"}, "C1": {"f": "=A1*2"}}}]}))
    main(["schema", str(wb), "--root", "S", "-o", str(tmp_path / "plain.csv")])
    main(["schema", str(wb), "--root", "S", "-o", str(tmp_path / "compat.csv"), "--compat-neighbor-annotations"])
    assert "Data Source,Unspecified,App UI" in (tmp_path / "plain.csv").read_text()
    assert "Data Source,Database,App UI" in (tmp_path / "compat.csv").read_text()


def test_report_over_empty_dir(tmp_path, capsys):
    (tmp_path / "runs").mkdir()
    assert main(["report", "--runs", str(tmp_path / "runs"), "--out", str(tmp_path / "d.html"), "--no-timestamp"]) == 0
    html = (tmp_path / "d.html").read_text()
    assert "<table" in html and "P0" not in html


def test_two_by_ten_batch(make_store, tmp_path, capsys):
    wc, sv = make_store(), make_store("surrender")
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps(manifest_doc(wc, sv, out_dir=str(tmp_path / "out"), jobs=4)))
    assert main(["batch", "--manifest", str(manifest), "--no-timestamp"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 20
    assert (tmp_path / "out" / "summary.csv").read_text().count("\n") == 21


def test_commands_are_idempotent(make_store, tmp_path):
    store = make_store(n=2, faults={"P002": {"H2": 1.0}})
    manifest = tmp_path / "m.json"
    blobs = []
    for name in ("one", "two"):
        manifest.write_text(json.dumps(manifest_doc(store, out_dir=str(tmp_path / name))))
        main(["batch", "--manifest", str(manifest), "--no-timestamp"])
        out = tmp_path / name
        blobs.append({p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    assert blobs[0] == blobs[1]
