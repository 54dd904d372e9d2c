import pytest

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.fixture
def report(request):
    """Attach measured quantities to the acceptance summary line."""
    marker = request.node.get_closest_marker("criterion")
    number = marker.args[0] if marker else None

    def add(text: str):
        if number is not None:
            _CRITERIA.setdefault(number, {}).setdefault("details", []).append(text)

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {})
    entry["title"] = title
    entry["passed"] = rep.passed
    entry["seconds"] = rep.duration


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        if "passed" not in e:
            continue
        status = "PASS" if e["passed"] else "FAIL"
        tr.write_line(f"criterion {number}: {status}  {e['title']}  ({e['seconds']:.1f}s)")
        for d in e.get("details", []):
            tr.write_line(f"    {d}")
