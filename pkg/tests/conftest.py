import pytest

_RESULTS = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Record ``(criterion, passed, detail)`` lines for the terminal summary."""
    config = request.config
    if _RESULTS not in config.stash:
        config.stash[_RESULTS] = []
    log = config.stash[_RESULTS]

    def record(criterion: str, passed: bool, detail: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
        log.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_RESULTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
