import pytest

from hierwalk.stepdist import CRW, JBeta, PowerLaw, Custom


def law_grid(orders=(2, 3, 5)):
    """CRW c in {0.5, 1, 1.5}, JBeta beta in {0, 1, 2} and PowerLaw beta=2 for each order."""
    out = []
    for M in orders:
        out += [CRW(M, c) for c in (0.5, 1.0, 1.5)]
        out += [JBeta(M, b) for b in (0.0, 1.0, 2.0)]
        out.append(PowerLaw(M, 2.0))
    return out


@pytest.fixture
def crw21():
    return CRW(2, 1.0)


ALL_FAMILIES = [
    CRW(2, 1.0),
    CRW(3, 2.0),
    JBeta(2, 0.0),
    JBeta(3, 1.5),
    PowerLaw(2, 2.0),
    PowerLaw(5, 3.0),
    Custom(3, [0.5, 0.25, 0.25], a=0.5),
]


# -- acceptance reporting: one PASS/FAIL line per criterion -----------------------

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


@pytest.fixture
def criterion(request):
    """Test fills in ``id``, ``title`` and ``detail``; the outcome becomes a summary line."""
    rec = {"id": 0, "title": request.node.name, "detail": ""}
    yield rec
    rep = getattr(request.node, "rep_call", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    line = f"{status}  [{rec['id']:>2}] {rec['title']}: {rec['detail']}"
    ACCEPTANCE_LINES[rec["id"]] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
