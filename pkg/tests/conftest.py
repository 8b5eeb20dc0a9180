import os

# single-threaded BLAS keeps timings honest and reductions reproducible
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import pytest  # noqa: E402
from hypothesis import HealthCheck, settings  # noqa: E402

settings.register_profile("repo", deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))

_RANK = {"passed": 0, "skipped": 1, "failed": 2}
_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.outcome == "passed"):
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "status": "passed", "detail": ""})
    if _RANK[rep.outcome] > _RANK[entry["status"]]:
        entry["status"] = rep.outcome
        if rep.outcome == "skipped" and isinstance(rep.longrepr, tuple):
            entry["detail"] = rep.longrepr[2]
        elif rep.outcome == "failed":
            entry["detail"] = item.name


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}
    for number in sorted(_criteria):
        c = _criteria[number]
        line = f"criterion {number:2d}  {label[c['status']]}  {c['title']}"
        if c["detail"]:
            line += f"  ({c['detail']})"
        tr.write_line(line)
