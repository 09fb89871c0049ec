"""Loader for the hand-derived formula golden file."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

from bvcs.address import a1_to_address, split_sheet
from bvcs.formula import evaluate_cell
from bvcs.values import CellValue, decode_literal
from bvcs.workbook import Workbook, workbook_from_dict

GOLDEN = Path(__file__).parent / "fixtures" / "formula_golden.csv"
HOME = "Main"
TARGET = "Z100"


@dataclass(frozen=True)
class GoldenCase:
    formula: str
    context: dict
    expected: CellValue

    def workbook(self) -> Workbook:
        sheets: dict[str, dict] = {HOME: {TARGET: {"f": self.formula}}}
        for key, raw in self.context.items():
            sheet, a1 = split_sheet(key)
            spec = {"f": raw} if isinstance(raw, str) and raw.startswith("=") else {"v": raw}
            sheets.setdefault(sheet or HOME, {})[a1] = spec
        doc = {"file": "golden.wbk", "sheets": [{"name": n, "cells": c} for n, c in sheets.items()]}
        return workbook_from_dict(doc)

    def evaluate(self) -> CellValue:
        return evaluate_cell(self.workbook(), a1_to_address(TARGET, HOME))


def load_golden(path: Path = GOLDEN) -> list[GoldenCase]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            GoldenCase(row["formula"], json.loads(row["context-cells"]), decode_literal(json.loads(row["expected-value"])))
            for row in csv.DictReader(fh)
        ]


def agrees(actual: CellValue, expected: CellValue, rel: float = 1e-9) -> bool:
    """Exact agreement, except numbers which may differ by ``rel`` relative error."""
    if isinstance(expected, float) and isinstance(actual, float):
        return math.isclose(actual, expected, rel_tol=rel, abs_tol=0.0 if expected else 1e-12)
    return type(actual) is type(expected) and actual == expected
