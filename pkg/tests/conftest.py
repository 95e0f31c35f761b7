import time

import pytest

_CRITERIA: dict[int, dict] = {}
_EXPECTED: dict[int, str] = {}


class CriterionRecorder:
    """Stores one verdict per acceptance criterion for the terminal summary."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.start = time.perf_counter()
        _EXPECTED[number] = title

    def record(self, passed: bool, detail: str = "", budget_s: float | None = None):
        elapsed = time.perf_counter() - self.start
        _CRITERIA[self.number] = {
            "passed": bool(passed),
            "detail": detail,
            "elapsed": elapsed,
            "budget": budget_s,
        }
        return passed


@pytest.fixture
def criterion():
    return CriterionRecorder


def pytest_terminal_summary(terminalreporter):
    if not _EXPECTED:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_EXPECTED):
        title = _EXPECTED[n]
        res = _CRITERIA.get(n)
        if res is None:
            tr.write_line(f"CRITERION {n}: FAIL  {title}  (no verdict: test errored before recording)")
            continue
        verdict = "PASS" if res["passed"] else "FAIL"
        timing = f"{res['elapsed']:.1f}s"
        if res["budget"] is not None:
            over = " OVER" if res["elapsed"] > res["budget"] else ""
            timing += f" / budget {res['budget']:.0f}s{over}"
        tr.write_line(f"CRITERION {n}: {verdict}  {title}  [{timing}]  {res['detail']}")
