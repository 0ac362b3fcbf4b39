"""Shared test plumbing.

The acceptance tests record one line per criterion; the terminal-summary
hook prints them after the run so the pass/fail lines are visible without
-s.
"""

_criterion_lines: list[str] = []


def record_criterion(number: int, status: str, detail: str = "") -> None:
    line = f"criterion {number:2d}: {status}"
    if detail:
        line += f" - {detail}"
    _criterion_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _criterion_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_criterion_lines):
            terminalreporter.write_line(line)
