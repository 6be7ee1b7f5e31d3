from __future__ import annotations

import pytest

from covweave.core import TASK_ORDER, TIER_ORDER, AttributeSeed, derive_seed
from covweave.harness import generate_instance

# Lines recorded by tests/test_acceptance.py, echoed after the run.
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_dataset():
    """Two instances per (task, tier), generated once per session."""
    out = []
    for kind in TASK_ORDER:
        for tier in TIER_ORDER:
            for i in range(2):
                out.append(generate_instance(
                    AttributeSeed(kind, tier, derive_seed("fixture", kind, tier, i))))
    return out


@pytest.fixture(scope="session")
def by_kind(small_dataset):
    groups = {}
    for inst in small_dataset:
        groups.setdefault(inst.task_kind, []).append(inst)
    return groups
