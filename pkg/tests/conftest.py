import contextlib

import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def criterion(request, capsys):
    """Context manager printing one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash[_LINES_KEY]

    @contextlib.contextmanager
    def check(label: str, tolerance: str):
        detail: dict = {}
        try:
            yield detail
        except BaseException as exc:
            if isinstance(exc, pytest.skip.Exception):
                line = f"[N/A ] {label} | {tolerance} | {exc.msg}"
            else:
                line = f"[FAIL] {label} | {tolerance} | {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
            lines.append(line)
            with capsys.disabled():
                print("\n" + line)
            raise
        note = detail.get("measured", "")
        line = f"[PASS] {label} | {tolerance} | {note}"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
