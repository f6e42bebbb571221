"""Pose error metrics, composite training losses, and their gradients.

Metrics take rotation matrices, unit quaternions or translations, single or
stacked along a leading batch axis. Composite losses average over the batch.

``loss_gradient`` differentiates a loss with respect to the *raw* head output
(before quaternion normalization / SVD projection), which is what the trainer
feeds back into the network.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import geom3
from .errors import InvalidArgumentError, UndefinedDirectionError

# arccos derivatives are zeroed within this distance of +-1
GUARD_BAND = 1e-7
MIN_DIRECTION_NORM = 1e-9

LOSS_IDS = ("universal", "reloc3r", "mse", "quat_pose_metric", "quat_pose_direction")
TRANSLATION_MODES = ("euclidean_m", "direction_rad")


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0
    translation_mode: str = "euclidean_m"

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidArgumentError(f"alpha must be positive, got {self.alpha}")
        if self.translation_mode not in TRANSLATION_MODES:
            raise InvalidArgumentError(f"translation_mode must be one of {TRANSLATION_MODES}")


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


# --- metrics ------------------------------------------------------------------------


def geodesic_distance(R_est, R_gt):
    """Angle of R_est^T R_gt in radians, in [0, pi].

    Equal to arccos((tr - 1) / 2) on SO(3), but evaluated as atan2 of the
    antisymmetric and trace parts so that small angles keep full precision.
    """
    R_est = geom3.check_so3(R_est)
    R_gt = geom3.check_so3(R_gt)
    D = np.einsum("...ji,...jk->...ik", R_est, R_gt)
    axis = np.stack([D[..., 2, 1] - D[..., 1, 2], D[..., 0, 2] - D[..., 2, 0], D[..., 1, 0] - D[..., 0, 1]], -1)
    s = 0.5 * np.linalg.norm(axis, axis=-1)
    c = 0.5 * (np.trace(D, axis1=-2, axis2=-1) - 1.0)
    return _scalar_or_array(np.arctan2(s, c))


def quaternion_error(q_est, q_gt):
    """2 arccos |<q_est, q_gt>|, insensitive to the sign of either quaternion.

    Evaluated as 2 atan2(|vec(q_est^-1 q_gt)|, |<q_est, q_gt>|), the same
    angle with full precision near zero.
    """
    q_est = geom3.check_unit_quat(q_est)
    q_gt = geom3.check_unit_quat(q_gt)
    dot = np.sum(q_est * q_gt, axis=-1)
    w1, v1 = q_est[..., :1], q_est[..., 1:]
    w2, v2 = q_gt[..., :1], q_gt[..., 1:]
    vec = w1 * v2 - w2 * v1 - np.cross(v1, v2)
    return _scalar_or_array(2.0 * np.arctan2(np.linalg.norm(vec, axis=-1), np.abs(dot)))


def euclidean_translation_error(t_est, t_gt):
    t_est = np.asarray(t_est, dtype=np.float64)
    t_gt = np.asarray(t_gt, dtype=np.float64)
    return _scalar_or_array(np.linalg.norm(t_est - t_gt, axis=-1))


def direction_errors(t_est, t_gt):
    """Batched direction error. Returns (angles, valid); undefined entries are NaN."""
    t_est = np.atleast_2d(np.asarray(t_est, dtype=np.float64))
    t_gt = np.atleast_2d(np.asarray(t_gt, dtype=np.float64))
    n_est = np.linalg.norm(t_est, axis=-1)
    n_gt = np.linalg.norm(t_gt, axis=-1)
    valid = (n_est > MIN_DIRECTION_NORM) & (n_gt > MIN_DIRECTION_NORM)
    denom = np.where(valid, n_est * n_gt, 1.0)
    c = np.clip(np.sum(t_est * t_gt, axis=-1) / denom, -1.0, 1.0)
    return np.where(valid, np.arccos(c), np.nan), valid


def translation_direction_error(t_est, t_gt):
    """Angle between two translation vectors; raises for (near) zero vectors."""
    ang, valid = direction_errors(t_est, t_gt)
    if not np.all(valid):
        raise UndefinedDirectionError("translation direction is undefined for vectors with norm <= 1e-9")
    single = np.ndim(t_est) == 1 and np.ndim(t_gt) == 1
    return float(ang[0]) if single else ang


# --- composite losses ----------------------------------------------------------------


def _stack_poses(poses):
    if isinstance(poses, geom3.Pose):
        poses = [poses]
    R = np.stack([p.rotation for p in poses])
    t = np.stack([p.translation for p in poses])
    return R, t


def universal_loss(pred, gt, cfg=LossConfig()):
    """E[geodesic] + alpha * E[euclidean translation] over a batch of poses."""
    Rp, tp = _stack_poses(pred)
    Rg, tg = _stack_poses(gt)
    rot = np.atleast_1d(geodesic_distance(Rp, Rg))
    trans = np.atleast_1d(euclidean_translation_error(tp, tg))
    return float(np.mean(rot) + cfg.alpha * np.mean(trans))


def reloc3r_loss(pred, gt, cfg=LossConfig()):
    """E[geodesic + alpha * direction error]; translation scale is ignored."""
    Rp, tp = _stack_poses(pred)
    Rg, tg = _stack_poses(gt)
    rot = np.atleast_1d(geodesic_distance(Rp, Rg))
    direction = np.atleast_1d(translation_direction_error(tp, tg))
    return float(np.mean(rot + cfg.alpha * direction))


def mse_loss(y_est, y_gt):
    """(1/d) ||y_est - y_gt||^2 per vector, averaged over a leading batch axis."""
    y_est = np.atleast_2d(np.asarray(y_est, dtype=np.float64))
    y_gt = np.atleast_2d(np.asarray(y_gt, dtype=np.float64))
    if y_est.shape != y_gt.shape:
        raise InvalidArgumentError(f"shape mismatch {y_est.shape} vs {y_gt.shape}")
    d = y_est.shape[-1]
    return float(np.mean(np.sum((y_est - y_gt) ** 2, axis=-1) / d))


def quaternion_pose_loss(q_est, t_est, q_gt, t_gt, cfg=LossConfig()):
    rot = np.atleast_1d(quaternion_error(q_est, q_gt))
    if cfg.translation_mode == "euclidean_m":
        trans = np.atleast_1d(euclidean_translation_error(t_est, t_gt))
    else:
        trans = np.atleast_1d(translation_direction_error(t_est, t_gt))
    return float(np.mean(rot) + cfg.alpha * np.mean(trans))


def combine_bidirectional(forward_loss, inverse_loss, reduction="sum"):
    if reduction == "sum":
        return forward_loss + inverse_loss
    if reduction == "mean":
        return 0.5 * (forward_loss + inverse_loss)
    raise InvalidArgumentError(f"unknown reduction {reduction!r}")


# --- gradients -------------------------------------------------------------------------


class LossGrad(NamedTuple):
    value: float
    grad: np.ndarray
    # per-item count of terms whose derivative was zeroed at a clamp / kink
    boundary_hits: np.ndarray


def _darccos(c, lo=-1.0):
    """Derivative of arccos, zeroed inside the guard band next to the clamp limits."""
    inside = (c < 1.0 - GUARD_BAND) & (c > lo + GUARD_BAND)
    safe = np.where(inside, c, 0.0)
    return np.where(inside, -1.0 / np.sqrt(1.0 - safe * safe), 0.0), ~inside


def _dR_dquat(q):
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    o = np.zeros_like(w)

    def m(rows):
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    dw = m([[o, -2 * z, 2 * y], [2 * z, o, -2 * x], [-2 * y, 2 * x, o]])
    dx = m([[o, 2 * y, 2 * z], [2 * y, -4 * x, -2 * w], [2 * z, 2 * w, -4 * x]])
    dy = m([[-4 * y, 2 * x, 2 * w], [2 * x, o, 2 * z], [-2 * w, 2 * z, -4 * y]])
    dz = m([[-4 * z, -2 * w, 2 * x], [2 * w, -4 * z, 2 * y], [2 * x, 2 * y, o]])
    return np.stack([dw, dx, dy, dz], axis=-3)  # (..., 4, 3, 3)


def _normalize_backward(raw, g_unit):
    """Pull a gradient w.r.t. raw/|raw| back to raw."""
    n = np.linalg.norm(raw, axis=-1, keepdims=True)
    u = raw / n
    return (g_unit - u * np.sum(u * g_unit, axis=-1, keepdims=True)) / n


def _rotvec_jacobian(w):
    theta2 = np.sum(w * w, axis=-1)
    theta = np.sqrt(theta2)
    small = theta < geom3.SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    s, c = np.sin(safe), np.cos(safe)
    A = np.where(small, 1.0 - theta2 / 6.0, s / safe)
    B = np.where(small, 0.5 - theta2 / 24.0, (1.0 - c) / safe**2)
    # (dA/dtheta)/theta and (dB/dtheta)/theta
    dA = np.where(small, -1.0 / 3.0, (safe * c - s) / safe**3)
    dB = np.where(small, -1.0 / 12.0, (safe * s - 2.0 * (1.0 - c)) / safe**4)
    K = geom3.skew(w)
    K2 = K @ K
    E = geom3.skew(np.eye(3))  # (3, 3, 3) generators
    out = []
    for k in range(3):
        wk = w[..., k][..., None, None]
        Ek = E[k]
        out.append(
            dA[..., None, None] * wk * K
            + A[..., None, None] * Ek
            + dB[..., None, None] * wk * K2
            + B[..., None, None] * (Ek @ K + K @ Ek)
        )
    return np.stack(out, axis=-3)  # (..., 3, 3, 3)


def _euler_jacobian(e, tag):
    if tag == "euler_int":
        a, b, g = e[..., 0], e[..., 1], e[..., 2]
    else:
        g, b, a = e[..., 0], e[..., 1], e[..., 2]

    def rz(t, d=False):
        c, s = np.cos(t), np.sin(t)
        o, one = np.zeros_like(t), np.ones_like(t)
        if d:
            rows = [[-s, -c, o], [c, -s, o], [o, o, o]]
        else:
            rows = [[c, -s, o], [s, c, o], [o, o, one]]
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    def ry(t, d=False):
        c, s = np.cos(t), np.sin(t)
        o, one = np.zeros_like(t), np.ones_like(t)
        if d:
            rows = [[-s, o, c], [o, o, o], [-c, o, -s]]
        else:
            rows = [[c, o, s], [o, one, o], [-s, o, c]]
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    def rx(t, d=False):
        c, s = np.cos(t), np.sin(t)
        o, one = np.zeros_like(t), np.ones_like(t)
        if d:
            rows = [[o, o, o], [o, -s, -c], [o, c, -s]]
        else:
            rows = [[one, o, o], [o, c, -s], [o, s, c]]
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    Za, Yb, Xg = rz(a), ry(b), rx(g)
    da = rz(a, True) @ Yb @ Xg
    db = Za @ ry(b, True) @ Xg
    dg = Za @ Yb @ rx(g, True)
    parts = [da, db, dg] if tag == "euler_int" else [dg, db, da]
    return np.stack(parts, axis=-3)


def _projection_backward(M, G):
    """Gradient of L(project_to_so3(M)) w.r.t. M given G = dL/dR."""
    U, S, Vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(U @ Vt))
    D = np.ones(S.shape)
    D[..., 2] = d
    U2 = U * D[..., None, :]
    S2 = S * D
    V = np.swapaxes(Vt, -1, -2)
    A = np.swapaxes(U2, -1, -2) @ G @ V
    denom = S2[..., :, None] + S2[..., None, :]
    K = (A - np.swapaxes(A, -1, -2)) / denom
    return U2 @ K @ Vt


def raw_to_rotation(raw_rot, tag):
    """Post-processed rotation from a raw head payload (normalize / project / direct map)."""
    if tag == "quat":
        return geom3.quat_to_matrix(geom3.normalize_quat(raw_rot))
    if tag == "matrix":
        return geom3.project_to_so3(raw_rot.reshape(raw_rot.shape[:-1] + (3, 3)))
    return geom3.values_to_rotation(raw_rot, tag)


def _rotation_backward(raw_rot, tag, G):
    """Chain dL/dR (..., 3, 3) back to the raw rotation payload."""
    if tag == "quat":
        u = raw_rot / np.linalg.norm(raw_rot, axis=-1, keepdims=True)
        g_unit = np.einsum("...kij,...ij->...k", _dR_dquat(u), G)
        return _normalize_backward(raw_rot, g_unit)
    if tag == "matrix":
        M = raw_rot.reshape(raw_rot.shape[:-1] + (3, 3))
        return _projection_backward(M, G).reshape(raw_rot.shape)
    if tag == "rotvec":
        return np.einsum("...kij,...ij->...k", _rotvec_jacobian(raw_rot), G)
    return np.einsum("...kij,...ij->...k", _euler_jacobian(raw_rot, tag), G)


def _geodesic_and_grad(R, R_gt):
    tr = np.einsum("...ij,...ij->...", R, R_gt)
    c = np.clip((tr - 1.0) * 0.5, -1.0, 1.0)
    dc, hit = _darccos(c)
    return np.arccos(c), (dc * 0.5)[..., None, None] * R_gt, hit


def _euclid_and_grad(t, t_gt):
    diff = t - t_gt
    n = np.linalg.norm(diff, axis=-1)
    zero = n == 0.0
    g = np.where(zero[..., None], 0.0, diff / np.where(zero, 1.0, n)[..., None])
    return n, g, zero


def _direction_and_grad(t, t_gt):
    n = np.linalg.norm(t, axis=-1)
    ng = np.linalg.norm(t_gt, axis=-1)
    if np.any(n <= MIN_DIRECTION_NORM) or np.any(ng <= MIN_DIRECTION_NORM):
        raise UndefinedDirectionError("translation direction is undefined for vectors with norm <= 1e-9")
    u = t / n[..., None]
    ug = t_gt / ng[..., None]
    c = np.clip(np.sum(u * ug, axis=-1), -1.0, 1.0)
    dc, hit = _darccos(c)
    dcdt = (ug - c[..., None] * u) / n[..., None]
    return np.arccos(c), dc[..., None] * dcdt, hit


def _quat_err_and_grad(raw_q, q_gt):
    u = raw_q / np.linalg.norm(raw_q, axis=-1, keepdims=True)
    dot = np.sum(u * q_gt, axis=-1)
    c = np.clip(np.abs(dot), 0.0, 1.0)
    # |dot| has a kink at 0 too; the guard band covers both ends
    dc, hit = _darccos(c, lo=0.0)
    g_unit = (2.0 * dc * np.sign(dot))[..., None] * q_gt
    return 2.0 * np.arccos(c), _normalize_backward(raw_q, g_unit), hit


def loss_gradient(loss_id, raw, gt_rotation, gt_translation, tag, cfg=LossConfig()):
    """Batch loss and its gradient w.r.t. raw head outputs.

    raw: (B, k + 3) raw vectors for representation ``tag``; gt_rotation
    (B, 3, 3); gt_translation (B, 3). The loss is the batch mean, and the
    returned gradient has the shape of ``raw``.
    """
    if loss_id not in LOSS_IDS:
        raise InvalidArgumentError(f"unknown loss id {loss_id!r}; expected one of {LOSS_IDS}")
    geom3.check_tag(tag)
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    R_gt = np.asarray(gt_rotation, dtype=np.float64).reshape(-1, 3, 3)
    t_gt = np.asarray(gt_translation, dtype=np.float64).reshape(-1, 3)
    B = raw.shape[0]
    k = geom3.REPR_DIMS[tag]
    if raw.shape[1] != k + 3 or R_gt.shape[0] != B or t_gt.shape[0] != B:
        raise InvalidArgumentError(f"inconsistent shapes raw={raw.shape} R_gt={R_gt.shape} t_gt={t_gt.shape}")
    raw_rot, t = raw[:, :k], raw[:, k:]
    grad = np.zeros_like(raw)
    hits = np.zeros(B, dtype=np.int64)

    if loss_id == "mse":
        y_gt = np.stack([geom3.pose_to_vector(geom3.Pose(R_gt[i], t_gt[i]), tag) for i in range(B)])
        d = raw.shape[1]
        diff = raw - y_gt
        value = float(np.mean(np.sum(diff * diff, axis=-1) / d))
        return LossGrad(value, 2.0 * diff / (d * B), hits)

    if loss_id in ("universal", "reloc3r"):
        R = raw_to_rotation(raw_rot, tag)
        rot, G, hit_r = _geodesic_and_grad(R, R_gt)
        grad[:, :k] = _rotation_backward(raw_rot, tag, G)
    else:
        if tag != "quat":
            raise InvalidArgumentError(f"{loss_id} requires the quat representation, got {tag!r}")
        q_gt = geom3.matrix_to_quat(R_gt)
        rot, grad[:, :k], hit_r = _quat_err_and_grad(raw_rot, q_gt)
    hits += hit_r

    use_direction = loss_id == "reloc3r" or loss_id == "quat_pose_direction"
    if use_direction:
        trans, gt_, hit_t = _direction_and_grad(t, t_gt)
    else:
        trans, gt_, hit_t = _euclid_and_grad(t, t_gt)
    hits += hit_t
    grad[:, k:] = cfg.alpha * gt_
    value = float(np.mean(rot) + cfg.alpha * np.mean(trans))
    return LossGrad(value, grad / B, hits)


def loss_value(loss_id, raw, gt_rotation, gt_translation, tag, cfg=LossConfig()):
    """Forward-only companion of :func:`loss_gradient` (same post-processing)."""
    return loss_gradient(loss_id, raw, gt_rotation, gt_translation, tag, cfg).value
