import pytest

CRITERIA = {
    1: "grammar agrees with explicit-state oracle on all sequences of length <= 3",
    2: "advertise/ask-if/tell build-up with id threading; 9 perturbations rejected",
    3: "start guard admits exactly the starter performatives",
    4: "postcondition fixtures and completion subsumption",
    5: "sorry suppression matches replay oracle",
    6: "brokered run: blank originator, requester never sees D, completion holds",
    7: "codec round trip on 1000 trees; reference message fields",
    8: "prefix closure and negation as failure under random generation",
}

_results: dict = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    n = int(name.split("_")[2])
    if report.when == "call" or report.failed:
        prev = _results.get(n, True)
        _results[n] = prev and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        if n in _results:
            mark = "PASS" if _results[n] else "FAIL"
            terminalreporter.write_line(f"criterion {n}: {mark}  {CRITERIA[n]}")
