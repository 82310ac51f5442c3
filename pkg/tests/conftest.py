from pathlib import Path

import pytest

from disbound.mutual_info import FiniteLearningProblem, GibbsAlgorithm

ROOT = Path(__file__).resolve().parents[1]

_ACCEPTANCE = []


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion for the summary printout."""
    state = {}

    def record(number, title):
        state["number"], state["title"] = number, title

    yield record
    if "number" in state:
        rep = getattr(request.node, "rep_call", None)
        passed = rep is not None and rep.passed
        _ACCEPTANCE.append((state["number"], state["title"], passed))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {title}")


@pytest.fixture
def toy_problem():
    """|Z| = 2, m = 2, |H| = 2 with a Gibbs posterior."""
    return FiniteLearningProblem(
        z_probs=[0.6, 0.4],
        loss_table=[[0.0, 1.0], [1.0, 0.0]],
        m=2,
        algorithm=GibbsAlgorithm(1.0),
    )
