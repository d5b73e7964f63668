"""Acceptance battery: every criterion at its stated tolerance.

Each test prints the criterion's pass/fail line (visible with -s or on
failure) and asserts the verdict.  The same functions back the CLI
`validate` subcommand.
"""
import pytest

from diskperc import acceptance


@pytest.mark.parametrize("fn", acceptance.ALL, ids=lambda f: f.__name__)
def test_criterion(fn):
    rec = fn()
    status = "PASS" if rec["passed"] else "FAIL"
    print(f"[{status}] {rec['name']} ({rec['seconds']}s): {rec['detail']}")
    assert rec["passed"], f"{rec['name']}: {rec['detail']}"
