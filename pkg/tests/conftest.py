import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qdcavity.hilbert import SystemParams
from qdcavity.units import detuning_from_nm, ghz_to_rad_ps, q_to_rad_ps

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

G = ghz_to_rad_ps(25.0)
KAPPA = q_to_rad_ps(1e4)
GAMMA = 0.007694101005182832
DELTA_12 = detuning_from_nm(-1.2)

ACCEPTANCE_LINES = []


def record(line):
    """Store a criterion verdict for the terminal summary (and echo it)."""
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def device_params():
    return SystemParams(g=G, kappa=KAPPA, gamma=GAMMA, gamma_d=0.1 * G, delta=0.0, n_max=2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def close(a, b, rtol=0.0, atol=0.0):
    return math.isclose(a, b, rel_tol=rtol, abs_tol=atol)
