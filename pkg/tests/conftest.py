import numpy as np
import pytest

from torus_renorm.field import FourierField, TorusMap
from torus_renorm.lattice import FrequencyVector, expand
from torus_renorm.renorm import build_schedule, expansion_for, run
from torus_renorm.rotation import conjugated_field

# amplitude of h = id + a sin(2 pi (x1 - x2)) e1 in the acceptance instance
ACCEPT_AMP = 1e-6
ACCEPT_K = 16

_ACCEPTANCE_LINES = []


def shear_map(amplitude=ACCEPT_AMP, strip=1.0, K=ACCEPT_K, k=(1, -1), axis=0):
    """``x -> x + amplitude sin(2 pi k.x) e_axis`` as a torus map."""
    e = np.zeros(2, dtype=complex)
    e[axis] = -0.5j * amplitude
    neg = tuple(-v for v in k)
    return TorusMap(FourierField.from_modes({tuple(k): e, neg: np.conj(e)}, strip, K=K))


@pytest.fixture(scope="session")
def golden():
    return FrequencyVector.preset("golden")


@pytest.fixture(scope="session")
def golden_exp(golden):
    return expand(golden, 10.0)


@pytest.fixture(scope="session")
def deep_exp(golden):
    """Expansion with constants for eight renormalization steps."""
    return expansion_for(golden, 8)


@pytest.fixture(scope="session")
def accept_h():
    return shear_map()


@pytest.fixture(scope="session")
def accept_field(golden, accept_h):
    """``h*omega`` on strip 10, the default initial strip."""
    return conjugated_field(golden.components, accept_h, ACCEPT_K, strip=10.0)


@pytest.fixture(scope="session")
def unsafe_instance(golden, deep_exp, accept_h):
    """The acceptance field on strip 1, run four steps without enforcement.

    The faithful run is rejected by the initial gate at every strip, so the
    downstream checks use this continuation.
    """
    X = conjugated_field(golden.components, accept_h, ACCEPT_K, strip=1.0)
    sched = build_schedule(deep_exp, rho=1.0)
    trace = run(X, deep_exp, sched, n_max=4, enforce=False)
    return X, sched, trace


@pytest.fixture(scope="session")
def unsafe_chain(unsafe_instance, deep_exp):
    from torus_renorm.conjugacy import chain_from_trace

    _, _, trace = unsafe_instance
    return chain_from_trace(trace, deep_exp)


@pytest.fixture(scope="session")
def acceptance_report():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
