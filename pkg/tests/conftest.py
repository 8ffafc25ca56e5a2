"""Shared test plumbing: acceptance-criterion result collection so the
acceptance suite prints one pass/fail line per criterion at the end."""

CRITERION_RESULTS = []


def record_criterion(number, name, passed, detail=""):
    line = f"criterion {number:>2} {name}: {'PASS' if passed else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    CRITERION_RESULTS.append(line)
    print(line)
    assert passed, line


def pytest_terminal_summary(terminalreporter):
    if CRITERION_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_RESULTS:
            terminalreporter.write_line(line)
