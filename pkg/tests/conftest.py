import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)


@st.composite
def sym_tensors(draw, scale=10.0):
    a = draw(arrays(float, (3, 3), elements=st.floats(-scale, scale, allow_nan=False)))
    return 0.5 * (a + a.T)


@st.composite
def deformations(draw):
    """Deformation gradients ``I + 0.5 R`` with ``det > 0.3``."""
    r = draw(arrays(float, (3, 3), elements=st.floats(-1.0, 1.0, allow_nan=False)))
    F = np.eye(3) + 0.5 * r
    if np.linalg.det(F) < 0.3:
        F = np.eye(3) + 0.05 * r
    return F


@st.composite
def damage_tensors(draw, upper=0.95):
    u = draw(arrays(float, 3, elements=st.floats(0.0, upper)))
    q = draw(arrays(float, 3, elements=st.floats(-np.pi, np.pi)))
    Q = Rotation.from_rotvec(q).as_matrix()
    return Q @ np.diag(u) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_C(rng):
    while True:
        F = np.eye(3) + 0.5 * rng.uniform(-1, 1, (3, 3))
        if np.linalg.det(F) > 0.3:
            return F.T @ F


def random_D(rng, upper=0.95):
    Q = Rotation.random(random_state=rng).as_matrix()
    return Q @ np.diag(rng.uniform(0, upper, 3)) @ Q.T



# ---------------------------------------------------------------------------
# acceptance summary
# ---------------------------------------------------------------------------

def pytest_terminal_summary(terminalreporter):
    from acceptance_registry import ACCEPTANCE
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {text}")
