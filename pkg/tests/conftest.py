"""Shared fixtures for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from tabrisk.data import CATEGORICAL, LABEL, NUMERIC, Column, Dataset, Schema
from tabrisk.fixture import fixture_dataset


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Numerical gradient of scalar ``f`` with respect to array ``x`` (modified in place and restored)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a - b| / max(|a|, |b|, 1e-8), the usual gradient-check ratio."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


def toy_dataset(n: int = 40, seed: int = 0) -> Dataset:
    """Two numeric and two categorical columns with a label driven by both kinds."""
    rng = np.random.default_rng(seed)
    schema = Schema(
        (
            Column("a", NUMERIC),
            Column("b", NUMERIC),
            Column("colour", CATEGORICAL, ("red", "green", "blue")),
            Column("flag", CATEGORICAL, ("no", "yes")),
            Column("y", LABEL),
        )
    )
    num = rng.normal(size=(n, 2))
    cat = np.column_stack([rng.integers(0, 3, n), rng.integers(0, 2, n)])
    y = ((num[:, 0] + (cat[:, 1] == 1) * 1.5 + rng.normal(0, 0.5, n)) > 0.7).astype(int)
    return Dataset(schema, num, cat, y)


@pytest.fixture(scope="session")
def heart_fixture() -> Dataset:
    """600 synthetic heart-table rows, parsed through the CSV loader."""
    return fixture_dataset(600, seed=3)


# acceptance results: criterion number -> (status, title, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:>2} {status:<4} {title}: {detail}")
