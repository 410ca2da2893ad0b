import helpers


def pytest_terminal_summary(terminalreporter):
    if helpers.ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(helpers.ACCEPTANCE_REPORT, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
