import pytest

# (criterion number, label) -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    def record(n, passed, detail, label=""):
        ACCEPTANCE[(n, label)] = (bool(passed), detail)
        print(f"ACCEPTANCE {n} {'PASS' if passed else 'FAIL'}: {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[(n, label)]
        terminalreporter.write_line(f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}")
