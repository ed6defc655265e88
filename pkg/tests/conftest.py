import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

import re

_CRITERIA: dict[int, str] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if m is None or (report.when != "call" and report.passed):
        return
    n = int(m.group(1))
    detail = dict(report.user_properties).get("detail", "")
    status = "PASS" if report.passed else "FAIL"
    if report.when != "call":
        detail = detail or f"{report.when} error"
    _CRITERIA[n] = f"criterion {n:2d}: {status}  {detail}".rstrip()


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
