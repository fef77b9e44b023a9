import sys


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance criteria verdicts past pytest's output capture."""
    for name, module in sys.modules.items():
        if name.rsplit(".", 1)[-1] == "test_acceptance" and hasattr(module, "VERDICTS"):
            if module.VERDICTS:
                terminalreporter.section("acceptance criteria")
                for line in module.VERDICTS:
                    terminalreporter.write_line(line)
            return
