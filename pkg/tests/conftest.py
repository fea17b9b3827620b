"""Collects acceptance-criterion verdicts and prints them after the run."""
import pytest

_RESULTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS] = {}


@pytest.fixture
def criterion(request):
    """``criterion(n, ok, detail)`` records a verdict; a test that dies first is reported as FAIL."""
    results = request.config.stash[_RESULTS]
    recorded = []

    def record(number: int, ok: bool | None, detail: str) -> bool | None:
        """``ok=None`` marks a criterion that is not applicable at this scale."""
        results[number] = (None if ok is None else bool(ok), detail)
        recorded.append(number)
        print(_line(number, results[number]))
        return ok

    yield record
    if not recorded:
        number = request.node.get_closest_marker("criterion")
        if number is not None:
            results.setdefault(number.args[0], (False, "did not complete"))


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.line(_line(number, results[number]))


def _line(number, result):
    ok, detail = result
    verdict = "N/A " if ok is None else ("PASS" if ok else "FAIL")
    return f"criterion {number}: {verdict}  {detail}"
