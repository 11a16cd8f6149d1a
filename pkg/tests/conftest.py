import pytest

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_KEY] = []


@pytest.fixture
def acceptance(request):
    """Call with ``(criterion, ok, detail)``; lines are echoed in the summary."""
    lines = request.config.stash[_KEY]

    def report(criterion, ok, detail):
        verdict = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        line = f"[{verdict}] {criterion}: {detail}"
        print(line)
        lines.append(line)

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
