import pytest

ACCEPTANCE_TITLES = {
    1: "gradient check of the full loss",
    2: "closed-form KLD vs Monte Carlo",
    3: "ELBO decomposition and KLD >= 0",
    4: "reparameterized sample moments",
    5: "DTW vs exhaustive search",
    6: "NMF monotonicity and exemplar fit",
    7: "training improves the ELBO",
    8: "conversion beats the unconverted source",
    9: "non-parallel training close to parallel",
    10: "one multi-speaker model for all pairs",
    11: "pipeline determinism",
    12: "analysis/synthesis round trip",
}

_results = {}


@pytest.fixture
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""

    def record(number, passed, detail):
        _results[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not any(n in _results for n in ACCEPTANCE_TITLES) and not _acceptance_ran(terminalreporter):
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, title in ACCEPTANCE_TITLES.items():
        if n in _results:
            ok, detail = _results[n]
            tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail}")
        else:
            tr.write_line(f"[FAIL] {n:>2}. {title}: not run or errored before measuring")


def _acceptance_ran(tr):
    for key in ("passed", "failed", "error"):
        for rep in tr.stats.get(key, []):
            if "test_acceptance" in getattr(rep, "nodeid", ""):
                return True
    return False
