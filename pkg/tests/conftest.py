import pytest

# acceptance criterion number -> status line, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def record():
    def _record(n, ok, detail):
        line = "criterion %2d: %s  %s" % (n, "PASS" if ok else "FAIL", detail)
        ACCEPTANCE[n] = line
        print(line)
        assert ok, line
    return _record
