import pytest

_CRITERIA = []


@pytest.fixture
def record_criterion():
    """Return ``record(number, title, failures, detail)`` which prints one
    pass/fail line and keeps it for the terminal summary."""
    def record(number, title, failures, detail=""):
        ok = not failures
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        if failures:
            line += "  failures: " + "; ".join(failures)
        _CRITERIA.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
