"""The ten acceptance criteria at their default tolerances and fixed seed.

Each test prints one PASS/FAIL line (collected again in the terminal
summary) followed by the individual measured-versus-threshold checks.
"""

import pytest

from conftest import ACCEPTANCE_LINES
from vmm_limits import acceptance


@pytest.fixture(scope="session")
def suite():
    return acceptance.Suite(seed=acceptance.ACCEPTANCE_SEED)


@pytest.mark.slow
@pytest.mark.parametrize("cid", list(acceptance.CRITERIA))
def test_criterion(suite, cid):
    result = suite.run(cid)
    line = f"{cid} {'PASS' if result.passed else 'FAIL'} {result.title}"
    ACCEPTANCE_LINES.append(line)
    ACCEPTANCE_LINES.extend(f"    {c.line()}" for c in result.checks)
    print(line)
    for c in result.checks:
        print(f"    {c.line()}")
    failed = [c.line() for c in result.checks if not c.passed]
    assert result.passed, "; ".join(failed)
