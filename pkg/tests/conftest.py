import pytest

# criterion number -> (passed, detail); filled by test_acceptance.py
CRITERIA: dict = {}


@pytest.fixture
def record():
    def _record(number: int, passed: bool, detail: str):
        prev = CRITERIA.get(number)
        if prev is not None:
            passed = passed and prev[0]
            detail = prev[1] + "; " + detail
        CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, detail = CRITERIA[n]
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
