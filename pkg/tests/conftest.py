import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    crit = _RESULTS.get(report.nodeid)
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        # a failure in any phase sticks
        if crit["outcome"] in (None, "passed"):
            crit["outcome"] = report.outcome
            crit["seconds"] = report.duration


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _RESULTS[item.nodeid] = {"number": number, "title": title, "outcome": None,
                                     "seconds": 0.0}


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    by_number = {}
    for crit in _RESULTS.values():
        entry = by_number.setdefault(crit["number"], {"title": crit["title"], "outcomes": [],
                                                      "seconds": 0.0})
        entry["outcomes"].append(crit["outcome"])
        entry["seconds"] += crit["seconds"]
    terminalreporter.section("acceptance criteria")
    for number in sorted(by_number):
        entry = by_number[number]
        outs = entry["outcomes"]
        if all(o == "passed" for o in outs):
            verdict = "PASS"
        elif any(o is None for o in outs) and not any(o == "failed" for o in outs):
            verdict = "NOT RUN"
        elif all(o == "skipped" for o in outs):
            verdict = "SKIP"
        else:
            verdict = "FAIL"
        terminalreporter.write_line(
            f"criterion {number:2d} {verdict:7s} {entry['title']} ({entry['seconds']:.1f} s)")
