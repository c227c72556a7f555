import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines and terminalreporter.config.getoption("capture") != "no":
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
