import pytest

CRITERIA = {
    1: "cell-geometry exactness",
    2: "channel permeability",
    3: "Taylor dispersion",
    4: "structural invariants on random cells",
    5: "BPTT gradient check",
    6: "internal-variable necessity and test errors",
    7: "time-step independence",
    8: "uniform-wells run",
    9: "Pe/Da sensitivity ordering",
    10: "a-posteriori surrogate fidelity",
    11: "heterogeneous block scenarios",
    12: "plumbing and Darcy convergence",
}

_results = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records the outcome shown in the summary."""
    def record(n, ok, detail=""):
        _results[n] = (bool(ok), detail)
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    tr = terminalreporter
    ran = any("test_acceptance" in getattr(rep, "nodeid", "") for reps in tr.stats.values() for rep in reps)
    if not ran:
        return
    tr.section("acceptance criteria")
    for n, name in CRITERIA.items():
        ok, detail = _results.get(n, (False, "not evaluated"))
        tr.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
