"""
Acceptance criteria at full scale.

Each test prints one verdict line of the form
``criterion N [PASS|FAIL] title: detail (seconds)`` and fails when the
criterion does. The checks share one context, so simulated trials are run
once and reused (e.g. the audits of criterion 9 cover every trial run by
the rate and convergence checks before it).

Expect roughly half an hour on one core.
"""

import pytest

from leakbeam.verify import CRITERIA, Context, run_check

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def context():
    return Context(full=True, seed=0)


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, context, capsys):
    result = run_check(number, context)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
