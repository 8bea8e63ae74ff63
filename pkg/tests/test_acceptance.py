"""The ten acceptance criteria at their stated budgets and tolerances.

Each test prints one PASS/FAIL line; all lines are repeated in the terminal
summary under "acceptance criteria".
"""
import pytest

from transindex import acceptance

from conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("criterion", acceptance.CRITERIA, ids=lambda c: c.__name__)
def test_criterion(criterion):
    res = criterion()
    line = f"{res.line()}  ({res.seconds:.1f}s)"
    ACCEPTANCE_LINES.append((res.number, line))
    print(line)
    assert res.passed, line
