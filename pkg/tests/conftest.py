import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(id, title): exit criterion reported in the summary")


@pytest.fixture
def measured(request):
    """Dict whose contents are echoed next to the criterion's verdict."""
    marker = request.node.get_closest_marker("acceptance")
    entry = _criteria.setdefault(marker.args[0], {"title": marker.args[1]}) if marker else {}
    return entry.setdefault("measured", {})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    entry = _criteria.setdefault(marker.args[0], {"title": marker.args[1]})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if report.skipped:
            entry["verdict"] = "SKIP"
            entry["why"] = report.longrepr[-1] if isinstance(report.longrepr, tuple) else ""
        else:
            entry["verdict"] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_criteria, key=lambda c: int(c[1:])):
        e = _criteria[cid]
        extra = ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in e.get("measured", {}).items())
        line = f"{e.get('verdict', '----'):4}  {cid}  {e['title']}"
        if extra:
            line += f"  [{extra}]"
        if e.get("why"):
            line += f"  ({e['why']})"
        terminalreporter.write_line(line)
