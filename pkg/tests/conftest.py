from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
sys.path.insert(0, str(TESTS))

FIXTURES = TESTS / "fixtures"


@pytest.fixture
def withdrawal_path() -> Path:
    return FIXTURES / "withdrawal" / "withdrawal_charge.wbk.json"


@pytest.fixture
def surrender_path() -> Path:
    return FIXTURES / "surrender" / "surrender_value.wbk.json"


class Store:
    """A generated data store next to a fixture workbook."""

    def __init__(self, kind: str, root: Path, n: int, faults=None, seed: int = 0):
        import simulated_pas as pas

        self.root = root
        self.ids = pas.policy_ids(n)
        self.policies = [pas.make_policy(pid, seed) for pid in self.ids]
        if kind == "withdrawal":
            pas.write_withdrawal_store(root, self.policies, faults)
            self.workbook = pas.WITHDRAWAL_WB
        else:
            pas.write_surrender_store(root, self.policies, faults)
            self.workbook = pas.SURRENDER_WB
        self.bindings = root / "bindings.json"


@pytest.fixture
def make_store(tmp_path):
    def make(kind="withdrawal", n=10, faults=None, seed=0, name=None):
        return Store(kind, tmp_path / (name or kind), n, faults, seed)

    return make


def manifest_doc(*stores, out_dir="out", jobs=1, policies=None):
    return {
        "entries": [
            {
                "workbook_path": str(s.workbook),
                "root_sheet": "Main",
                "bindings_path": str(s.bindings),
                "policies": list(policies if policies is not None else s.ids),
            }
            for s in stores
        ],
        "jobs": jobs,
        "out_dir": out_dir,
    }


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
