"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The checks, tolerances and time budgets live in :mod:`nonplanar_brake.bench`
so that ``nonplanar-brake bench`` and this file run exactly the same code.
"""

from __future__ import annotations

import pytest

from nonplanar_brake import bench
from nonplanar_brake.simulator import warm_up


@pytest.fixture(scope="module", autouse=True)
def compiled_kernels():
    # keep one-off JIT compilation out of the timed scenario rows
    warm_up()


@pytest.mark.parametrize("key", [c[0] for c in bench.CRITERIA],
                         ids=[f"{c[0]}-{c[1].replace(' ', '_')}" for c in bench.CRITERIA])
def test_acceptance_criterion(key, capsys):
    result = bench.run_criterion(key)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
