import pathlib

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

DATA = pathlib.Path(__file__).with_name("data")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def checkerboard(h, w, lo=0.0, hi=1.0):
    v, u = np.mgrid[0:h, 0:w]
    return np.where((u + v) % 2 == 0, hi, lo).astype(np.float64)


# (criterion, passed, detail) rows recorded by test_acceptance.py
ACCEPTANCE = []


def record(criterion, passed, detail):
    ACCEPTANCE.append((criterion, bool(passed), detail))
    print(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[0])):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
