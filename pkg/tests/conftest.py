import pytest

_LINES = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_LINES] = {}


@pytest.fixture
def criterion(request):
    """Record the pass/fail line of one acceptance criterion.

    Usage: ``criterion(n, passed, detail)``.  A test that ends without
    recording (e.g. because it raised) is reported as failed.
    """
    lines = request.config.stash[_LINES]
    recorded = {}

    def record(n: int, passed: bool, detail: str) -> None:
        recorded[n] = True
        lines[n] = f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}"

    yield record
    for n in getattr(request.function, "criteria", ()):
        if n not in recorded:
            lines[n] = f"criterion {n}: FAIL  (test aborted before reporting)"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
