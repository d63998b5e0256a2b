import numpy as np
import pytest

from dpgraph import DoublePhaseParams, LatticeSpec, build_lattice


@pytest.fixture(scope="session")
def z2():
    return build_lattice(LatticeSpec(2, 4))


@pytest.fixture(scope="session")
def z2_big():
    return build_lattice(LatticeSpec(2, 6))


@pytest.fixture(scope="session")
def z3():
    return build_lattice(LatticeSpec(3, 2))


def coercive(g, p=1.5, q=2.5, c=1.0):
    return DoublePhaseParams(p, q, c * g.norm1().astype(float), "coercive")


def constant(g, p=1.5, q=2.5, c=0.0):
    return DoublePhaseParams.constant(g, p, q, c)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def record(criterion, ok, detail=""):
    """Log a criterion outcome for the end-of-run summary, then assert it."""
    ACCEPTANCE.append((criterion, bool(ok), detail))
    assert ok, f"criterion {criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(ACCEPTANCE, key=lambda r: (int(str(r[0]).split("-")[0]), str(r[0]))):
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
