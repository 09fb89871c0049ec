import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from randbook import random_book

from bvcs.address import a1_to_address
from bvcs.errors import ConflictingTable, SchemaFormatError, UnknownSheet, UnresolvedSheet
from bvcs.schema import (
    LABELS,
    DependencyGraph,
    SchemaExtraction,
    SchemaRecord,
    TableSpec,
    build_graph,
    classify,
    crawl_referred_sheets,
    detect_tables,
    emit_schema,
    generate_schema,
    parse_schema,
    schema_from_csv,
    schema_to_csv,
)
from bvcs.workbook import Workbook, load_workbook, workbook_from_dict


def at(a1, sheet="S"):
    return a1_to_address(a1, sheet)


def test_graph_and_classification():
    wb = Workbook.from_cells({"S": {"A1": 1, "A2": 2, "B1": "=A1+A2", "C1": "=B1*2", "D9": "lonely"}})
    graph = build_graph(wb, "S")
    assert graph.edges == {(at("A1"), at("B1")), (at("A2"), at("B1")), (at("B1"), at("C1"))}
    assert at("D9") in graph.nodes
    assert classify(graph) == ([at("A1"), at("A2")], [at("C1")])


def test_blank_referenced_cell_is_an_input():
    wb = Workbook.from_cells({"S": {"B1": "=A1*2"}})
    assert classify(build_graph(wb, "S")) == ([at("A1")], [at("B1")])


def test_constant_formula_is_input_when_referred():
    wb = Workbook.from_cells({"S": {"A1": "=2+3", "B1": "=A1"}})
    assert classify(build_graph(wb, "S")) == ([at("A1")], [at("B1")])


def test_bfs_follows_chain():
    wb = Workbook.from_cells(
        {"Main": {"A1": "=A!A1"}, "A": {"A1": "=B!A1"}, "B": {"A1": 1}, "Unused": {"A1": "=Main!A1"}}
    )
    assert crawl_referred_sheets(wb, "main").sheets == ("Main", "A", "B")


def test_mutual_reference_visits_each_sheet_once():
    wb = Workbook.from_cells({"Main": {"A1": 1, "B1": "=Rates!A1+A1"}, "Rates": {"A1": "=Main!A1*2"}})
    ex = crawl_referred_sheets(wb, "Main")
    assert ex.sheets == ("Main", "Rates")
    # Rates!A1 is referred from Main, so it is not an output
    assert ex.inputs == (at("A1", "Main"),)
    assert ex.outputs == (at("B1", "Main"),)


def test_missing_sheet_raises():
    wb = workbook_from_dict({"file": "x.wbk", "sheets": [{"name": "Main", "cells": {}}]})
    with pytest.raises(UnknownSheet):
        crawl_referred_sheets(wb, "Nope")
    with pytest.raises(UnresolvedSheet):
        workbook_from_dict({"file": "x.wbk", "sheets": [{"name": "Main", "cells": {"A1": {"f": "=Gone!A1"}}}]})


def test_vertical_run_is_rowwise_table():
    wb = Workbook.from_cells({"S": {"B5": 1, "B6": 2, "B7": 3, "C1": "=SUM(B5:B7)"}})
    ex = detect_tables(wb, crawl_referred_sheets(wb, "S"))
    assert ex.tables == (TableSpec(at("B5"), "RowWise", 3),)


def test_horizontal_run_is_columnwise_table():
    wb = Workbook.from_cells({"S": {"C2": 1, "D2": 2, "E2": 3, "A1": "=SUM(C2:E2)"}})
    ex = detect_tables(wb, crawl_referred_sheets(wb, "S"))
    assert ex.tables == (TableSpec(at("C2"), "ColumnWise", 3),)


def test_one_cell_range_is_not_a_table():
    wb = Workbook.from_cells({"S": {"B5": 1, "C1": "=SUM(B5:B5)"}})
    ex = generate_schema(wb, "S")
    assert [r.cell_id for r in ex.input_records] == ["B5"]


def test_run_broken_by_formula():
    wb = Workbook.from_cells({"S": {"A1": 1, "A2": 2, "A3": "=7", "A4": 4, "A5": 5, "A6": "=SUM(A1:A5)"}})
    ex = detect_tables(wb, crawl_referred_sheets(wb, "S"))
    # A3 is a constant formula referred by the SUM, so it is an input and joins the run
    assert ex.tables == (TableSpec(at("A1"), "RowWise", 5),)
    wb = Workbook.from_cells({"S": {"A1": 1, "A2": 2, "A3": "=A1", "A4": 4, "A5": 5, "A6": "=SUM(A1:A5)"}})
    ex = detect_tables(wb, crawl_referred_sheets(wb, "S"))
    assert ex.tables == (TableSpec(at("A1"), "RowWise", 2), TableSpec(at("A4"), "RowWise", 2))


def test_conflicting_directions():
    wb = Workbook.from_cells({"S": {"B2": 1, "B3": 1, "C2": 1, "Z1": "=SUM(B2:B3)+SUM(B2:C2)"}})
    with pytest.raises(ConflictingTable):
        detect_tables(wb, crawl_referred_sheets(wb, "S"))


def test_declared_table_wins():
    doc = {
        "file": "t.wbk",
        "sheets": [{"name": "S", "cells": {"A1": {"v": 1}, "A2": {"v": 2}, "B1": {"f": "=SUM(A1:A9)"}}}],
        "tables": [{"anchor": "S!A1", "direction": "RowWise", "capacity": 9}],
    }
    ex = detect_tables(workbook_from_dict(doc), crawl_referred_sheets(workbook_from_dict(doc), "S"))
    assert ex.tables == (TableSpec(at("A1"), "RowWise", 9),)


def test_withdrawal_fixture(withdrawal_path):
    ex = generate_schema(load_workbook(withdrawal_path), "Main")
    ids = [(r.field_type, r.cell_id, r.data_source, r.format) for r in ex.records]
    assert ids == [
        ("Input", "B3", "Database", "Number[2]"),
        ("Input", "B4", "App UI", "Date"),
        ("Input", "B5", "Database", "Date"),
        ("Input", "B6", "Config Table", "Percentage[2]"),
        ("Input", "B7", "Database", "Number[2]"),
        ("Input", "B8", "Config Table", "Number[0]"),
        ("Input", "B9", "Database", "Number[2]"),
        ("Input", "B10", "Database", "Number[2]"),
        ("Input", "B11", "Config Table", "Percentage[2]"),
        ("Input", "B14RowWise", "Database", "Date"),
        ("Input", "C14RowWise", "Database", "Number[2]"),
        ("Output", "H2", "App UI", "Number[2]"),
        ("Output", "H3", "App UI", "Number[2]"),
    ]
    assert {r.cs_sheet for r in ex.records} == {"wc.wbk$Main"}
    assert ex.warnings == ()


def test_csv_layout(withdrawal_path):
    text = schema_to_csv(generate_schema(load_workbook(withdrawal_path), "Main"))
    rows = text.splitlines()
    assert [r.split(",")[0] for r in rows] == list(LABELS)
    column = [r.split(",")[1] for r in rows]
    assert column == ["wc.wbk$Main", "Input", "B3", "Database", "Number[2]"]


def test_annotation_fallbacks():
    wb = Workbook.from_cells({"S": {"A1": 3, "A2": "x", "B1": "=A1&A2"}})
    ex = generate_schema(wb, "S")
    assert [(r.cell_id, r.data_source, r.format) for r in ex.records] == [
        ("A1", "Unspecified", "Number[2]"),
        ("A2", "Unspecified", "Text"),
        ("B1", "App UI", "Text"),
    ]
    assert len(ex.warnings) == 5


def test_neighbor_annotations_are_opt_in():
    wb = Workbook.from_cells({"S": {"A1": 3, "B1": "Database", "C1": "=A1"}})
    assert generate_schema(wb, "S").records[0].data_source == "Unspecified"
    assert generate_schema(wb, "S", neighbor_annotations=True).records[0].data_source == "Database"


def test_empty_extraction_csv():
    text = schema_to_csv(SchemaExtraction(sheets=()))
    assert text == "\n".join(LABELS) + "\n"
    assert schema_from_csv(text).records == ()


def test_row_layout_is_accepted():
    text = ",".join(LABELS) + "\nwc.wbk$Main,Input,B3,Database,Number[2]\nwc.wbk$Main,Output,H2,App UI,Number[2]\n"
    ex = schema_from_csv(text)
    assert [r.cell_id for r in ex.records] == ["B3", "H2"]


@pytest.mark.parametrize(
    "record",
    [
        ("wcMain", "Input", "B3", "Database", "Number[2]"),
        ("a$b$c", "Input", "B3", "Database", "Number[2]"),
        ("wc.wbk$Main", "Derived", "B3", "Database", "Number[2]"),
        ("wc.wbk$Main", "Input", "B0", "Database", "Number[2]"),
        ("wc.wbk$Main", "Input", "B3Diagonal", "Database", "Number[2]"),
        ("wc.wbk$Main", "Output", "H2", "Database", "Number[2]"),
        ("wc.wbk$Main", "Input", "B3", "Database", "Number[10]"),
        ("wc.wbk$Main", "Input", "B3", "Database", "Money"),
    ],
)
def test_bad_records(record):
    with pytest.raises(SchemaFormatError):
        SchemaRecord(*record)


def test_unlabelled_csv_is_rejected():
    with pytest.raises(SchemaFormatError):
        schema_from_csv("a,b\nc,d\n")
    with pytest.raises(SchemaFormatError):
        schema_from_csv("\n".join(f"{label},x" for label in LABELS[:4]) + "\nFormat\n")


def test_emit_and_parse_files(tmp_path, surrender_path):
    ex = generate_schema(load_workbook(surrender_path), "Main")
    path = tmp_path / "schema.csv"
    emit_schema(ex, path)
    assert parse_schema(path) == ex


records = st.builds(
    SchemaRecord,
    cs_sheet=st.sampled_from(["wc.wbk$Main", "sv.wbk$Rates", "my book.wbk$Q3, draft", 'q"t.wbk$T']),
    field_type=st.just("Input"),
    cell_id=st.builds(
        lambda c, r, d: f"{c}{r}{d}",
        st.sampled_from(["A", "H", "AA", "ZZ"]),
        st.integers(1, 9999),
        st.sampled_from(["", "RowWise", "ColumnWise"]),
    ),
    data_source=st.sampled_from(["Database", "Config Table", "App UI", "Unspecified", "a,b", ""]),
    format=st.sampled_from(["Text", "Date", "Number[0]", "Number[2]", "Percentage[2]", "Currency[2]"]),
)
outputs = st.builds(
    lambda sheet, c, r, fmt: SchemaRecord(sheet, "Output", f"{c}{r}", "App UI", fmt),
    st.sampled_from(["wc.wbk$Main", "sv.wbk$Rates"]),
    st.sampled_from(["B", "H"]),
    st.integers(1, 50),
    st.sampled_from(["Text", "Number[2]"]),
)


@settings(max_examples=100)
@given(st.lists(st.one_of(records, outputs), max_size=20))
def test_csv_round_trip(recs):
    ex = SchemaExtraction.from_records(recs)
    assert schema_from_csv(schema_to_csv(ex)) == ex


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_classification_matches_definition(seed):
    book = random_book(random.Random(seed), max_cells=100)
    graph = DependencyGraph()
    for name in book.workbook.sheet_names:
        graph.merge(build_graph(book.workbook, name))
    inputs, outputs = classify(graph)
    assert (set(inputs), set(outputs)) == book.oracle_classes()
