import pytest

CRITERIA = {
    1: "Lagrangian identity",
    2: "calibration identity",
    3: "error-term support and scaling",
    4: "two-path consistency",
    5: "spectral uniformity",
    6: "elliptic-constant uniformity",
    7: "linearization and quadraticity",
    8: "det Hess bound",
    9: "contraction and fixed point",
    10: "mean-curvature decay",
    11: "determinism",
}

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """record(number, passed, detail): log one acceptance line and return ``passed``."""
    results = request.config.stash[_RESULTS]

    def record(number: int, passed: bool, detail: str) -> bool:
        results[number] = (bool(passed), detail)
        print(_line(number, bool(passed), detail))
        return bool(passed)

    return record


def _line(number, passed, detail):
    return f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} ({CRITERIA[number]}): {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in CRITERIA:
        passed, detail = results.get(number, (False, "not run or errored before recording"))
        terminalreporter.write_line(_line(number, passed, detail))
