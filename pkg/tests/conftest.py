from __future__ import annotations

import os

import numpy as np
import pytest

from ampread import make_cosine_basis


def pytest_collection_modifyitems(config, items):
    if os.environ.get("AMPREAD_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="five-asset run; set AMPREAD_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_bases(d, D, n_gr=None, L=0.0, U=1.0):
    return [make_cosine_basis(L, U, D, n_gr or D) for _ in range(d)]


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""
    def record(n, label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}: {label}" + (f"  [{detail}]" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
