import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def rot_x(a):
    # independent closed forms, deliberately not imported from the package
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def angle_between(R1, R2):
    """Rotation angle of R1^T R2 through the axis-angle of the quaternion (no arccos-of-trace)."""
    D = R1.T @ R2
    v = np.array([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]]) * 0.5
    return float(np.arctan2(np.linalg.norm(v), (np.trace(D) - 1.0) * 0.5))
