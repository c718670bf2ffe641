import math
import warnings

import numpy as np
import pytest

from optofeedback.dynamics import ParameterWarning, ProtocolParams


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def mini_params():
    """About 630 bins; a protocol run takes around a second."""
    return ProtocolParams(g0=0.05, omega_m=0.01, tau=20.0, n_rep=1)


@pytest.fixture(autouse=True)
def _quiet_cutoff_warnings():
    # small d_mech toy chains trip the phonon-cutoff warning by design
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ParameterWarning)
        yield


def random_unitary(rng, d):
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
