import sys


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance suite's PASS/FAIL lines after the run."""
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
