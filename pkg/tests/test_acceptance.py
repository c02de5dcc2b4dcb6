"""Acceptance battery: one test per criterion, one printed line each.

The Fixtures cache is shared across the module so the heavy trajectories
(strip ladders, nonlinear runs) are integrated once; lines are printed
outside pytest's capture so they stay visible in the run log.
"""

import pytest

from nlflux import acceptance


@pytest.fixture(scope="session")
def fx():
    fixtures = acceptance.Fixtures()
    fixtures.prewarm(acceptance._HEAVY, threads=4)
    return fixtures


@pytest.mark.parametrize("criterion", acceptance.CRITERIA,
                         ids=[f"{i + 1:02d}" for i in range(len(acceptance.CRITERIA))])
def test_criterion(criterion, fx, capfd):
    res = criterion(fx)
    with capfd.disabled():
        print(res.line(), flush=True)
    assert res.passed, res.line()


def test_battery_shape():
    assert len(acceptance.CRITERIA) == 14
    numbers = []
    for fn in acceptance.CRITERIA:
        assert callable(fn)
    # numbering is the position in the tuple
    fixtures = acceptance.Fixtures()
    res = acceptance.CRITERIA[1](fixtures)
    assert res.number == 2
    assert res.line().startswith("criterion 02")
