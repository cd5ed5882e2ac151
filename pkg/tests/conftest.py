import numpy as np
import pytest

from hfgpi import autodiff as ad
from hfgpi.gradcheck import finite_difference_check


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def check_grads(f, params, tol=1e-6):
    """Assert a finite-difference check passes and return the report."""
    report = finite_difference_check(f, params, tolerance=tol)
    assert report.passed, report.format_table()
    return report


def param(rng, *shape, name=None):
    return ad.parameter(rng.normal(size=shape), name)


# acceptance criteria register their verdicts here; printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(ACCEPTANCE[criterion])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
