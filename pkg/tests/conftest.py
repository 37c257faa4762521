"""Shared test plumbing: collect acceptance verdicts and print the scorecard
after the run, outside pytest's output capture."""

SCORECARD: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if SCORECARD:
        terminalreporter.write_sep("-", "acceptance scorecard")
        for line in SCORECARD:
            terminalreporter.write_line(line)
