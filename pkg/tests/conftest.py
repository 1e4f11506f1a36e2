from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# PASS/FAIL lines collected by the acceptance checks
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance summary")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
