"""Per-criterion summary for the acceptance suite.

Tests marked ``@pytest.mark.criterion(n, "title")`` are grouped by ``n``; a
criterion passes when every test in its group passes.  One line per
criterion is printed at the end of the run.
"""

import pytest

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            num, title = mark.args
            entry = _results.setdefault(num, {"title": title, "outcomes": {}, "notes": []})
            entry["outcomes"][item.nodeid] = "not run"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    entry = _results[mark.args[0]]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        state = "passed" if rep.passed else "skipped" if rep.skipped else "failed"
        entry["outcomes"][item.nodeid] = state
        if rep.skipped and isinstance(rep.longrepr, tuple):
            entry["notes"].append(rep.longrepr[2])


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_results):
        entry = _results[num]
        states = set(entry["outcomes"].values())
        if "failed" in states:
            verdict = "FAIL"
        elif "not run" in states:
            verdict = "NOT RUN"
        elif states == {"skipped"}:
            verdict = "SKIP"
        elif "skipped" in states:
            verdict = "PASS (partial)"
        else:
            verdict = "PASS"
        note = f"  [{'; '.join(entry['notes'])}]" if entry["notes"] else ""
        tr.write_line(f"criterion {num}: {verdict:<14} {entry['title']}{note}")
