"""Shared fixtures.

Model construction dominates the cost of many tests, so the standard models
are built once per session.  Tests must not mutate them.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from topocurrent.models import atomic_insulator, haldane, hofstadter

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(scope="session")
def hof12():
    return hofstadter(Lx=12, Ly=12)


@pytest.fixture(scope="session")
def hof18():
    return hofstadter(Lx=18, Ly=18)


@pytest.fixture(scope="session")
def hof24():
    return hofstadter(Lx=24, Ly=24)


@pytest.fixture(scope="session")
def haldane24():
    return haldane(Lx=24, Ly=24)


@pytest.fixture(scope="session")
def atomic24():
    return atomic_insulator(24, 24)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hermitian(rng, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return 0.5 * (a + a.conj().T)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
