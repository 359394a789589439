_acceptance_reports = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _acceptance_reports.append(report)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_reports:
        return
    terminalreporter.section("acceptance criteria")
    for report in sorted(_acceptance_reports, key=lambda r: r.nodeid):
        status = "PASS" if report.passed else "FAIL"
        name = report.nodeid.split("::")[-1]
        terminalreporter.write_line(f"{status} {name}")
