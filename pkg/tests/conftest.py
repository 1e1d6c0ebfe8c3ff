import numpy as np
import pytest

from isoflow.curve import CaseFlags, Involution

ALL_CASES = [
    CaseFlags(0, 0, Involution.REAL),
    CaseFlags(1, 0, Involution.REAL),
    CaseFlags(0, 1, Involution.UNIT_CIRCLE),
    CaseFlags(1, 1, Involution.UNIT_CIRCLE),
]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def case_id(flags):
    return f"{flags.a_flag}{flags.b_flag}-{flags.involution.value}"


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    rep = outcome.get_result()
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "seconds": 0.0})
    entry["seconds"] += rep.duration
    if rep.failed or (rep.when == "call" and not rep.passed):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {e['title']}  ({e['seconds']:.1f} s)")
