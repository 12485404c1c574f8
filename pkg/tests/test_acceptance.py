"""Acceptance criteria at full size and tolerance (about ten minutes).

Each test prints one ``[PASS]``/``[FAIL]`` line with the measured metrics.
"""

import pytest

from nnch.verify import ACCEPTANCE


@pytest.mark.acceptance
@pytest.mark.parametrize("check", [fn for _, fn in ACCEPTANCE], ids=[name for name, _ in ACCEPTANCE])
def test_criterion(check, capsys):
    result = check()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
