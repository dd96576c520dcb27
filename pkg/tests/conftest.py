import numpy as np
import pytest

from milc.diffcore import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def leaf(rng):
    """Factory for float64 leaf tensors that require grad."""

    def make(*shape, scale=1.0):
        return Tensor(scale * rng.standard_normal(shape), requires_grad=True)

    return make


# one pass/fail line per acceptance criterion, printed after the run
_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "details": []})
    if rep.failed or rep.skipped:
        entry["ok"] = False
    if rep.when == "call":
        entry["details"] += [f"{v}" for k, v in item.user_properties if k == "measured"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        line = f"criterion {number:>2} {'PASS' if e['ok'] else 'FAIL'}: {e['title']}"
        tr.write_line(line)
        for d in e["details"]:
            tr.write_line(f"    {d}")
