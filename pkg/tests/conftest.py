import numpy as np
import pytest

from artifact.spectral_material import MaterialSpec

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def constant(value):
    return lambda w: np.full(np.shape(w), float(value))


def make_spec(tau=5.0, v=1.0, n_mu=16, n_omega=24, omega_max=30.0, p0=1.25, v_prime=None):
    tau_f = tau if callable(tau) else constant(tau)
    v_f = v if callable(v) else constant(v)
    return MaterialSpec(omega_max, n_omega, n_mu, tau_f, v_f, ("bose_einstein", 1.0, 1.0), p0, v_prime)


@pytest.fixture(scope="session")
def spec():
    """tau = 5, v = 1, Bose-Einstein weight: the reference material."""
    return make_spec()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
