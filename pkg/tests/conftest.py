import _acceptance_report


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_report.RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for criterion, passed, detail in _acceptance_report.RESULTS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status} {criterion}: {detail}")
