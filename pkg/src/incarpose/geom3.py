"""Rotation and rigid-transform algebra.

Rotations are plain float64 numpy arrays. Every conversion accepts a single
value or a stack with arbitrary leading dimensions:

    rotation vector        (..., 3)     axis * angle, radians
    euler_int  [a, b, g]   (..., 3)     R = Rz(a) Ry(b) Rx(g), moving axes ZYX
    euler_ext  [g, b, a]   (..., 3)     same matrix, fixed axes x then y then z
    quaternion [w, x, y, z] (..., 4)
    matrix                 (..., 3, 3)

Poses are :class:`Pose` values holding a rotation matrix and a translation in
meters, composed as 4x4 homogeneous transforms.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateInputError, DomainError, InvalidArgumentError

SMALL_ANGLE = 1e-6
GIMBAL_TOL = 1e-7
SO3_TOL = 1e-9

REPR_TAGS = ("rotvec", "euler_int", "euler_ext", "quat", "matrix")
REPR_DIMS = {"rotvec": 3, "euler_int": 3, "euler_ext": 3, "quat": 4, "matrix": 9}


def _as_float(x, name="input"):
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError(f"{name} must be finite")
    return a


def skew(v):
    """Cross-product matrix [v]x, shape (..., 3, 3)."""
    v = np.asarray(v, dtype=np.float64)
    z = np.zeros(v.shape[:-1])
    x, y, w = v[..., 0], v[..., 1], v[..., 2]
    return np.stack(
        [
            np.stack([z, -w, y], axis=-1),
            np.stack([w, z, -x], axis=-1),
            np.stack([-y, x, z], axis=-1),
        ],
        axis=-2,
    )


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def check_so3(R, tol=SO3_TOL):
    """Raise DomainError unless every matrix in ``R`` is a proper rotation."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise DomainError(f"expected (..., 3, 3) rotation, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise DomainError("rotation matrix has non-finite entries")
    ortho = np.linalg.norm(np.swapaxes(R, -1, -2) @ R - np.eye(3), axis=(-2, -1))
    det = np.linalg.det(R)
    if np.any(ortho > tol) or np.any(np.abs(det - 1.0) > tol):
        raise DomainError(
            f"matrix is not in SO(3): max |R^T R - I|_F = {np.max(ortho):.3e}, "
            f"det range [{np.min(det):.6f}, {np.max(det):.6f}]"
        )
    return R


def is_so3(R, tol=SO3_TOL):
    try:
        check_so3(R, tol)
    except DomainError:
        return False
    return True


# --- rotation vector ---------------------------------------------------------


def rodrigues_to_matrix(rotvec):
    """Exponential map from axis-angle to rotation matrix.

    Below ``SMALL_ANGLE`` the coefficients sin(t)/t and (1 - cos t)/t^2 are
    replaced by their second-order Taylor expansions.
    """
    w = _as_float(rotvec, "rotation vector")
    theta2 = np.sum(w * w, axis=-1)
    theta = np.sqrt(theta2)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    K = skew(w)
    return np.eye(3) + a[..., None, None] * K + b[..., None, None] * (K @ K)


def canonical_rotvec(rotvec):
    """Fold rotation vectors into the ball of radius pi (antipodal points at pi kept in the upper half)."""
    w = _as_float(rotvec, "rotation vector")
    return matrix_to_rotvec(rodrigues_to_matrix(w))


def _canonical_axis_sign(u):
    # flip u where its first nonzero component is negative
    first = np.argmax(np.abs(u) > 0.0, axis=-1)
    lead = np.take_along_axis(u, first[..., None], axis=-1)
    return np.where(lead < 0.0, -u, u)


def matrix_to_rotvec(R):
    """Logarithm map. Output norm lies in [0, pi]; rotations by exactly pi
    get the axis sign whose first nonzero component is positive."""
    R = check_so3(R)
    tr = np.trace(R, axis1=-2, axis2=-1)
    cos_t = np.clip((tr - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(cos_t)
    vee = np.stack(
        [R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]],
        axis=-1,
    )
    sin_t = np.sin(theta)

    small = theta < SMALL_ANGLE
    near_pi = theta > np.pi - 0.1
    regular = ~(small | near_pi)

    out = np.zeros(vee.shape)
    # theta / (2 sin theta) -> 1/2 + theta^2/12 near zero
    coef_small = 0.5 + theta * theta / 12.0
    coef_reg = theta / (2.0 * np.where(regular, sin_t, 1.0))
    out = np.where(small[..., None], coef_small[..., None] * vee, out)
    out = np.where(regular[..., None], coef_reg[..., None] * vee, out)

    if np.any(near_pi):
        # (R + R^T)/2 = cos(t) I + (1 - cos t) u u^T
        sym = 0.5 * (R + np.swapaxes(R, -1, -2))
        uu = (sym - cos_t[..., None, None] * np.eye(3)) / (1.0 - cos_t)[..., None, None]
        diag = np.diagonal(uu, axis1=-2, axis2=-1)
        col = np.argmax(diag, axis=-1)
        u = np.take_along_axis(uu, col[..., None, None], axis=-1)[..., 0]
        u = u / np.linalg.norm(u, axis=-1, keepdims=True)
        dot = np.sum(u * vee, axis=-1)
        u = np.where((dot < 0.0)[..., None], -u, u)
        exact_pi = np.abs(dot) < 1e-15
        u = np.where(exact_pi[..., None], _canonical_axis_sign(u), u)
        out = np.where(near_pi[..., None], theta[..., None] * u, out)
    return out


# --- quaternions ---------------------------------------------------------------


def canonicalize_quat(q):
    """Choose the representative with w >= 0 (w == 0: first nonzero of x, y, z positive)."""
    q = np.asarray(q, dtype=np.float64)
    w = q[..., 0]
    vec_sign = _canonical_axis_sign(q[..., 1:])
    flip_vec = np.any(vec_sign != q[..., 1:], axis=-1)
    flip = (w < 0.0) | ((w == 0.0) & flip_vec)
    return np.where(flip[..., None], -q, q)


def normalize_quat(raw):
    """Unit-normalize and sign-canonicalize a raw 4-vector."""
    q = _as_float(raw, "quaternion")
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n <= 1e-12):
        raise DegenerateInputError("quaternion norm is too small to normalize")
    return canonicalize_quat(q / n)


def check_unit_quat(q, tol=1e-9):
    q = _as_float(q, "quaternion")
    if q.shape[-1] != 4:
        raise InvalidArgumentError(f"quaternion must have 4 components, got shape {q.shape}")
    n = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(n - 1.0) > tol):
        raise DomainError(f"quaternion is not unit length (norm {np.max(np.abs(n - 1.0)) + 1.0:.12g})")
    return q


def quat_to_matrix(q):
    q = check_unit_quat(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def matrix_to_quat(R):
    """Shepperd-style extraction: the branch is picked by the largest of
    1 + tr, 1 + 2 r11 - tr, 1 + 2 r22 - tr, 1 + 2 r33 - tr."""
    R = check_so3(R)
    lead = R.shape[:-2]
    q = kernels.matrix_to_quat(np.ascontiguousarray(R.reshape(-1, 3, 3)))
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return canonicalize_quat(q).reshape(lead + (4,))


def rotvec_to_quat(rotvec):
    w = _as_float(rotvec, "rotation vector")
    theta2 = np.sum(w * w, axis=-1)
    theta = np.sqrt(theta2)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    # sin(t/2)/t -> 1/2 - t^2/48
    k = np.where(small, 0.5 - theta2 / 48.0, np.sin(0.5 * safe) / safe)
    q = np.concatenate([np.cos(0.5 * theta)[..., None], k[..., None] * w], axis=-1)
    return canonicalize_quat(q)


def random_rotations(rng, n):
    """Uniform (Haar) rotations via normalized Gaussian quaternions."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return quat_to_matrix(q)


# --- Euler angles ----------------------------------------------------------------


def _zyx_product(alpha, beta, gamma):
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    return np.stack(
        [
            np.stack([ca * cb, ca * sb * sg - sa * cg, ca * sb * cg + sa * sg], axis=-1),
            np.stack([sa * cb, sa * sb * sg + ca * cg, sa * sb * cg - ca * sg], axis=-1),
            np.stack([-sb, cb * sg, cb * cg], axis=-1),
        ],
        axis=-2,
    )


def euler_intrinsic_to_matrix(euler):
    """[alpha, beta, gamma] -> Rz(alpha) Ry'(beta) Rx''(gamma)."""
    e = _as_float(euler, "euler angles")
    return _zyx_product(e[..., 0], e[..., 1], e[..., 2])


def euler_extrinsic_to_matrix(euler):
    """[gamma, beta, alpha] about fixed x, then y, then z -> Rz(alpha) Ry(beta) Rx(gamma)."""
    e = _as_float(euler, "euler angles")
    return _zyx_product(e[..., 2], e[..., 1], e[..., 0])


def _wrap_pi(a):
    # (-pi, pi]
    return np.where(a <= -np.pi, a + 2.0 * np.pi, a)


def matrix_to_euler(R, convention="euler_int"):
    """Recover ZYX angles. Near gimbal lock (|beta| within GIMBAL_TOL of pi/2)
    gamma is set to 0 and the remaining freedom goes into alpha.

    Returns [alpha, beta, gamma] for ``euler_int`` and [gamma, beta, alpha]
    for ``euler_ext``.
    """
    if convention not in ("euler_int", "euler_ext"):
        raise InvalidArgumentError(f"unknown euler convention {convention!r}")
    R = check_so3(R)
    beta = np.arctan2(-R[..., 2, 0], np.hypot(R[..., 0, 0], R[..., 1, 0]))
    locked = np.abs(np.abs(beta) - 0.5 * np.pi) < GIMBAL_TOL
    alpha = np.where(locked, np.arctan2(-R[..., 0, 1], R[..., 1, 1]), np.arctan2(R[..., 1, 0], R[..., 0, 0]))
    gamma = np.where(locked, 0.0, np.arctan2(R[..., 2, 1], R[..., 2, 2]))
    alpha, gamma = _wrap_pi(alpha), _wrap_pi(gamma)
    if convention == "euler_int":
        return np.stack([alpha, beta, gamma], axis=-1)
    return np.stack([gamma, beta, alpha], axis=-1)


# --- projection -------------------------------------------------------------------


def project_to_so3(M):
    """Nearest rotation in Frobenius norm: U diag(1, 1, det(U V^T)) V^T."""
    M = _as_float(M, "matrix")
    if M.shape[-2:] != (3, 3):
        raise InvalidArgumentError(f"expected (..., 3, 3) matrix, got shape {M.shape}")
    U, S, Vt = np.linalg.svd(M)
    if np.any(S[..., 2] <= 1e-12 * np.maximum(S[..., 0], 1e-300)):
        raise DegenerateInputError("matrix is rank deficient; nearest rotation is not unique")
    d = np.sign(np.linalg.det(U @ Vt))
    D = np.ones(S.shape)
    D[..., 2] = d
    return (U * D[..., None, :]) @ Vt


# --- poses ------------------------------------------------------------------------


@dataclass(frozen=True)
class Pose:
    """Rigid transform x -> R x + t, translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        check_so3(R)
        if not np.all(np.isfinite(t)):
            raise InvalidArgumentError("translation must be finite")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    def __matmul__(self, other):
        return compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


def compose(a, b):
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(a):
    Rt = a.rotation.T
    return Pose(Rt, -Rt @ a.translation)


def relative_pose(ref, view2):
    """Second view expressed in the reference frame: ref^-1 * view2."""
    Rt = ref.rotation.T
    return Pose(Rt @ view2.rotation, Rt @ (view2.translation - ref.translation))


def pose_close(a, b, tol):
    return bool(
        np.max(np.abs(a.rotation - b.rotation)) <= tol and np.max(np.abs(a.translation - b.translation)) <= tol
    )


# --- tagged representations --------------------------------------------------------


@dataclass(frozen=True)
class RotationRepr:
    tag: str
    values: np.ndarray

    def __post_init__(self):
        if self.tag not in REPR_DIMS:
            raise InvalidArgumentError(f"unknown representation tag {self.tag!r}; expected one of {REPR_TAGS}")
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if v.shape[0] != REPR_DIMS[self.tag]:
            raise InvalidArgumentError(f"{self.tag} payload needs {REPR_DIMS[self.tag]} values, got {v.shape[0]}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def check_tag(tag):
    if tag not in REPR_DIMS:
        raise InvalidArgumentError(f"unknown representation tag {tag!r}; expected one of {REPR_TAGS}")
    return tag


def repr_dim(tag):
    """Length of the flat output vector: rotation components plus 3 translation."""
    return REPR_DIMS[check_tag(tag)] + 3


def rotation_to_values(R, tag):
    """Rotation matrices (..., 3, 3) -> payload (..., k) for ``tag``."""
    check_tag(tag)
    if tag == "rotvec":
        return matrix_to_rotvec(R)
    if tag in ("euler_int", "euler_ext"):
        return matrix_to_euler(R, tag)
    if tag == "quat":
        return matrix_to_quat(R)
    R = check_so3(R)
    return R.reshape(R.shape[:-2] + (9,))


def values_to_rotation(values, tag):
    """Payload (..., k) -> rotation matrices. No projection or normalization is applied."""
    check_tag(tag)
    v = _as_float(values, "rotation payload")
    if v.shape[-1] != REPR_DIMS[tag]:
        raise InvalidArgumentError(f"{tag} payload needs {REPR_DIMS[tag]} values, got {v.shape[-1]}")
    if tag == "rotvec":
        return rodrigues_to_matrix(v)
    if tag == "euler_int":
        return euler_intrinsic_to_matrix(v)
    if tag == "euler_ext":
        return euler_extrinsic_to_matrix(v)
    if tag == "quat":
        return quat_to_matrix(v)
    return check_so3(v.reshape(v.shape[:-1] + (3, 3)))


def pose_to_repr(pose, tag):
    return RotationRepr(tag, rotation_to_values(pose.rotation, tag))


def repr_to_pose(r, translation):
    return Pose(values_to_rotation(r.values, r.tag), translation)


def pose_to_vector(pose, tag):
    """Flat network target y = [rotation payload, tx, ty, tz] (matrix payload row-major r11..r33)."""
    return np.concatenate([rotation_to_values(pose.rotation, tag), pose.translation])


def vector_to_pose(y, tag):
    y = _as_float(y, "pose vector")
    k = REPR_DIMS[check_tag(tag)]
    if y.shape != (k + 3,):
        raise InvalidArgumentError(f"{tag} pose vector needs {k + 3} values, got shape {y.shape}")
    return Pose(values_to_rotation(y[:k], tag), y[k:])
