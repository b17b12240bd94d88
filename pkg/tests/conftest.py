"""Shared pytest plumbing: the acceptance-criteria result banner."""

_ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool) -> None:
    _ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in _ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
