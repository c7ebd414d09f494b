import pytest

# lines appended by tests/test_acceptance.py, echoed after the run so that
# `pytest -v | tee` keeps one pass/fail line per criterion
ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: grid or long-trajectory checks (minutes)")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    def rec(num, ok, detail=""):
        line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        ACCEPTANCE.append(line)
        print(line)
        return ok
    return rec
