"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import pytest

from artifact import acceptance

from conftest import ACCEPTANCE_LINES


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number):
    result = acceptance.run([number])[0]
    line = result.line()
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    for note in result.notes:
        print(f"  note: {note}")
    assert result.runtime < result.runtime_limit, line
    assert result.passed, line
