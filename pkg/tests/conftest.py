import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from artifact.geometry import CameraPose


def random_pose(rng, width=8, height=6, spread=2.0):
    R = Rotation.random(random_state=rng).as_matrix()
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    return CameraPose(
        R=R,
        t=rng.uniform(-spread, spread, 3),
        fx=rng.uniform(5, 12),
        fy=rng.uniform(5, 12),
        cx=width / 2 + rng.uniform(-1, 1),
        cy=height / 2 + rng.uniform(-1, 1),
        width=width,
        height=height,
    )


def random_poses(seed, n, **kw):
    rng = np.random.default_rng(seed)
    return [random_pose(rng, **kw) for _ in range(n)]


@pytest.fixture
def poses10():
    return random_poses(10, 10)


# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
