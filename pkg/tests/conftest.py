import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blab import circle, ellipse, fourier

settings.register_profile("blab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("blab")

THIRD = math.pi / 3

# (number, passed, title, detail) rows filled by test_acceptance.py
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, title, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2} {status}  {title}  [{detail}]")


@pytest.fixture(scope="session")
def unit_circle():
    return circle(1.0)


@pytest.fixture(scope="session")
def ellipse21():
    return ellipse(2.0, 1.0)


@pytest.fixture(scope="session")
def near_circle_ellipse():
    return ellipse(1.05, 1.0)


@pytest.fixture(scope="session")
def trefoil():
    """The three-lobed polar graph r = 1 + 0.1 cos 3 phi."""
    return fourier(1.0, [0.0, 0.0, 0.1])


@pytest.fixture(scope="session")
def test_curves(unit_circle, ellipse21, trefoil):
    return {"circle": unit_circle, "ellipse": ellipse21, "fourier": trefoil}


def random_phase(curve, n, seed, margin=1e-3):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, curve.length, n), rng.uniform(margin, math.pi - margin, n)
