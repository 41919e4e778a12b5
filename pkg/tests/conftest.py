import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pdflow.problem import QuadraticProblem, random_quadratic

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.register_profile("fast", deadline=None, max_examples=8)
settings.load_profile("default")


@pytest.fixture
def quad():
    return random_quadratic(n=4, m=2, seed=3, a_scale=0.5)


@pytest.fixture
def tiny():
    """f = x^2 / 2, A = [1], b = 0, saddle (0, 0)."""
    return QuadraticProblem([[1.0]], [0.0], [[1.0]], [0.0]).with_saddle()


def random_state(rng, n, m, t=None):
    from pdflow.dynamics import PhaseState

    t = float(rng.uniform(1.0, 20.0)) if t is None else t
    return PhaseState(t, rng.standard_normal(n), rng.standard_normal(m),
                      rng.standard_normal(n), rng.standard_normal(m))


# -- bundled suite, shared by the CLI and acceptance tests ----------------------------

@pytest.fixture(scope="session")
def bundled_suite(tmp_path_factory):
    """Run every bundled scenario once through ``pdflow suite``; returns (exit code, out dir)."""
    from pdflow.cli import main
    from pdflow.scenario import bundled_dir

    out = tmp_path_factory.mktemp("suite")
    code = main(["suite", bundled_dir(), "--out", str(out), "--quiet"])
    return code, out


ACCEPTANCE = {}


def record_criterion(number, ok, detail=""):
    """Store a criterion's verdict for the end-of-run table and assert it."""
    ACCEPTANCE[number] = ("PASS" if ok else "FAIL", detail)
    assert ok, f"criterion {number}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        verdict, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {verdict}  {detail}")
