import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


# One verdict line per acceptance criterion, printed after the run.
_criteria: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_ac" not in report.nodeid:
        return
    name = report.nodeid.split("::test_")[-1].split("_")[0].upper()
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[name] = ("PASS" if report.outcome == "passed" else "FAIL", "")
    elif report.when == "teardown" and name in _criteria:
        # the measurement summary is attached while the detail fixture tears down
        _criteria[name] = (_criteria[name][0], dict(report.user_properties).get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda s: int(s[2:])):
        verdict, detail = _criteria[name]
        terminalreporter.write_line(f"{name:<5} {verdict}  {detail}")
