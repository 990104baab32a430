"""Shared test plumbing: collects the release-gate checklist lines emitted
by test_acceptance.py and replays them after the run, where pytest's output
capture cannot swallow them."""

_gate_lines: list[str] = []


def record_gate_line(line: str) -> None:
    _gate_lines.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _gate_lines:
        return
    terminalreporter.section("release gate")
    for line in _gate_lines:
        terminalreporter.write_line(line)
