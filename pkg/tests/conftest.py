import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(tag, ok, detail)`` then assert ``ok``."""

    def record(tag: str, ok: bool, detail: str):
        _LINES.append(f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}")
        assert ok, f"{tag}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
