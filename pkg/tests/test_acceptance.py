"""Acceptance criteria 1-9; each test prints one PASS/FAIL line and its individual checks."""

import pytest

from encoder_lab.acceptance import CRITERIA, run_criterion


@pytest.mark.slow
@pytest.mark.parametrize("number", [c.number for c in CRITERIA], ids=[f"criterion_{c.number}" for c in CRITERIA])
def test_criterion(number, capsys):
    result = run_criterion(number, seed=0)
    with capsys.disabled():
        print()
        print(result.line())
        for check in result.report.checks:
            print("    " + check.line())
    assert result.report.passed, result.report.summary()
    assert result.within_budget, f"{result.seconds:.1f}s exceeds the {result.criterion.budget}s budget"
