"""Per-criterion PASS/FAIL summary for the acceptance suite."""
from collections import OrderedDict

_CRITERIA = OrderedDict()      # n -> [title, outcomes]
_NODES = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is None:
            continue
        n, title = mark.args
        _CRITERIA.setdefault(n, [title, []])
        _NODES[item.nodeid] = n
    for n in sorted(_CRITERIA):
        _CRITERIA.move_to_end(n)


def pytest_runtest_logreport(report):
    n = _NODES.get(report.nodeid)
    if n is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _CRITERIA[n][1].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, (title, outcomes) in _CRITERIA.items():
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {title}")
