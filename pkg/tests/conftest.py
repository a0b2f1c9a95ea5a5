import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

TITLES = {
    1: "Choquet engine inequalities",
    2: "beta comparisons",
    3: "oracle equivalence",
    4: "Christ cubes",
    5: "corona regions",
    6: "David-Toro iteration",
    7: "certificates",
    8: "determinism and golden files",
}

_OUTCOMES: dict[int, dict[str, str]] = {}
_NOTES: dict[int, list[str]] = {}


def pytest_addoption(parser):
    parser.addoption("--bless", action="store_true", default=False, help="Rewrite golden files instead of comparing.")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion exercised by the test")


@pytest.fixture
def bless(request):
    return request.config.getoption("--bless")


@pytest.fixture
def measured(request):
    """Record a measured constant under the test's criterion for the summary."""
    marker = request.node.get_closest_marker("criterion")
    key = marker.args[0] if marker else 0

    def note(text: str) -> None:
        _NOTES.setdefault(key, []).append(f"{request.node.name}: {text}")

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    slot = _OUTCOMES.setdefault(marker.args[0], {})
    if rep.failed:
        slot[item.nodeid] = "failed"
    elif rep.when == "call" and rep.passed:
        slot.setdefault(item.nodeid, "passed")
    elif rep.skipped:
        slot.setdefault(item.nodeid, "skipped")


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(TITLES):
        slot = _OUTCOMES.get(n)
        if not slot:
            tr.write_line(f"criterion {n} ({TITLES[n]}): NOT RUN")
            continue
        passed = sum(v == "passed" for v in slot.values())
        verdict = "PASS" if passed == len(slot) else "FAIL"
        tr.write_line(f"criterion {n} ({TITLES[n]}): {verdict} ({passed}/{len(slot)} checks)")
        for line in _NOTES.get(n, []):
            tr.write_line(f"    {line}")
