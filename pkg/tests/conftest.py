import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(key, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    key, title = mark.args
    entry = _CRITERIA.setdefault(key, {"title": title, "passed": True, "detail": ""})
    if rep.failed:
        entry["passed"] = False
        entry["detail"] = str(rep.longrepr.reprcrash.message) if hasattr(rep.longrepr, "reprcrash") else "error"
    for name, value in item.user_properties:
        if name == "measured":
            entry["measured"] = value


def _sort_key(key):
    digits = "".join(c for c in key if c.isdigit())
    return int(digits), key


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=_sort_key):
        entry = _CRITERIA[key]
        status = "PASS" if entry["passed"] else "FAIL"
        line = f"{status}  {key:>3}  {entry['title']}"
        if "measured" in entry:
            line += f"  [{entry['measured']}]"
        tr.write_line(line)
        if not entry["passed"]:
            tr.write_line(f"           {entry['detail'].splitlines()[0]}")
