import acceptance_verdicts


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_verdicts.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_verdicts.LINES:
            terminalreporter.write_line(line)
