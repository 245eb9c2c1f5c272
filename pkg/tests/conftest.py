"""Shared coefficient sets for the three worked examples."""
import numpy as np
import pytest

from hopfzero.dynsys import FamilyACoeffs, FamilyBCoeffs

EX1 = FamilyACoeffs(d=19 / 8, w=39 / 64, eps=1 / 5000, alpha1=128 * np.sqrt(2),
                    gamma1=671757 / 2007040000)
EX2 = FamilyBCoeffs(d=4, w=0.5, eps=1 / 20, alpha=(0.5, -1, 0.03),
                    beta=(0.25, -1.000435384, 1 / 50), gamma=(1, -4, 1 / 100))
EX3 = FamilyBCoeffs(d=10 / 7, w=11 / 7, eps=1 / 15, alpha=(15 / 7, 2, 1),
                    beta=(1452 / 343, -1502 / 343, 1), gamma=(12 / 7, -2 / 7, 1))


@pytest.fixture
def ex1():
    return EX1


@pytest.fixture
def ex2():
    return EX2


@pytest.fixture
def ex3():
    return EX3


# ── acceptance summary ──────────────────────────────────────────────────────

ACCEPTANCE_LINES = {}


def record_criterion(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES[n] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
