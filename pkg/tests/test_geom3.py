import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from incarpose import geom3
from incarpose.errors import DegenerateInputError, DomainError, InvalidArgumentError

from conftest import angle_between, rot_x, rot_y, rot_z

finite = st.floats(-10.0, 10.0, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


# --- rodrigues ------------------------------------------------------------------------------


def test_rodrigues_zero_is_identity():
    assert np.array_equal(geom3.rodrigues_to_matrix([0.0, 0.0, 0.0]), np.eye(3))


def test_rodrigues_quarter_turn_about_x():
    expected = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
    np.testing.assert_allclose(geom3.rodrigues_to_matrix([np.pi / 2, 0, 0]), expected, atol=1e-15)


def test_rodrigues_taylor_branch_matches_extended_precision():
    mpmath.mp.dps = 50
    a = mpmath.mpf("1e-9")
    exact = np.array(
        [[1, 0, 0], [0, float(mpmath.cos(a)), -float(mpmath.sin(a))], [0, float(mpmath.sin(a)), float(mpmath.cos(a))]]
    )
    np.testing.assert_allclose(geom3.rodrigues_to_matrix([1e-9, 0, 0]), exact, rtol=0, atol=1e-15)


def test_rodrigues_rejects_nonfinite():
    with pytest.raises(InvalidArgumentError):
        geom3.rodrigues_to_matrix([np.nan, 0, 0])


@pytest.mark.parametrize("theta", [1e-7, 5e-7, 9.99e-7, 1.01e-6, 2e-6])
def test_rodrigues_continuous_across_taylor_threshold(theta):
    axis = np.array([0.3, -0.5, 0.8])
    axis /= np.linalg.norm(axis)
    R = geom3.rodrigues_to_matrix(theta * axis)
    q = np.concatenate([[np.cos(theta / 2)], np.sin(theta / 2) * axis])
    np.testing.assert_allclose(R, geom3.quat_to_matrix(q), atol=1e-15)


# --- log map --------------------------------------------------------------------------------


def test_rotvec_of_identity():
    np.testing.assert_array_equal(geom3.matrix_to_rotvec(np.eye(3)), np.zeros(3))


def test_rotvec_of_quarter_turn():
    np.testing.assert_allclose(geom3.matrix_to_rotvec(rot_x(np.pi / 2)), [np.pi / 2, 0, 0], atol=1e-14)


def test_rotvec_of_half_turn_uses_axis_extraction():
    np.testing.assert_allclose(geom3.matrix_to_rotvec(np.diag([1.0, -1.0, -1.0])), [np.pi, 0, 0], atol=1e-15)


@pytest.mark.parametrize("eps", [0.0, 1e-12, 1e-8, 1e-4, 0.05])
def test_rotvec_near_pi_roundtrip(eps):
    axis = np.array([1.0, 2.0, -2.0]) / 3.0
    R = geom3.rodrigues_to_matrix((np.pi - eps) * axis)
    w = geom3.matrix_to_rotvec(R)
    assert np.linalg.norm(w) <= np.pi + 1e-15
    np.testing.assert_allclose(geom3.rodrigues_to_matrix(w), R, atol=1e-9)


def test_rotvec_rejects_non_rotation():
    with pytest.raises(DomainError):
        geom3.matrix_to_rotvec(np.diag([1.0, 1.0, -1.0]))


def test_rotvec_roundtrip_batch(rng):
    R = geom3.random_rotations(rng, 2000)
    w = geom3.matrix_to_rotvec(R)
    assert np.all(np.linalg.norm(w, axis=-1) <= np.pi + 1e-12)
    assert np.max(np.abs(geom3.rodrigues_to_matrix(w) - R)) < 1e-9


# --- quaternions ----------------------------------------------------------------------------------


def test_quat_identity():
    np.testing.assert_array_equal(geom3.quat_to_matrix([1.0, 0, 0, 0]), np.eye(3))


def test_quat_half_turn_about_x():
    np.testing.assert_allclose(
        geom3.quat_to_matrix([0.0, 1, 0, 0]), geom3.rodrigues_to_matrix([np.pi, 0, 0]), atol=1e-15
    )
    np.testing.assert_array_equal(geom3.quat_to_matrix([0.0, 1, 0, 0]), np.diag([1.0, -1.0, -1.0]))


def test_quat_quarter_turn_matches_rodrigues():
    h = np.sqrt(0.5)
    np.testing.assert_allclose(geom3.quat_to_matrix([h, h, 0, 0]), rot_x(np.pi / 2), atol=1e-15)


def test_quat_to_matrix_rejects_non_unit():
    with pytest.raises(DomainError):
        geom3.quat_to_matrix([1.0, 1.0, 0, 0])


def test_matrix_to_quat_examples():
    np.testing.assert_array_equal(geom3.matrix_to_quat(np.eye(3)), [1.0, 0, 0, 0])
    np.testing.assert_array_equal(geom3.matrix_to_quat(np.diag([1.0, -1.0, -1.0])), [0.0, 1, 0, 0])


def test_matrix_to_quat_roundtrip_1e4(rng):
    R = geom3.random_rotations(rng, 10_000)
    q = geom3.matrix_to_quat(R)
    assert np.max(np.abs(geom3.quat_to_matrix(q) - R)) < 1e-12
    assert np.all(q[:, 0] >= 0)


@pytest.mark.parametrize(
    "R",
    [np.diag([-1.0, 1.0, -1.0]), np.diag([-1.0, -1.0, 1.0]), rot_y(np.pi - 1e-9), rot_z(np.pi + 1e-9)],
)
def test_matrix_to_quat_stable_near_half_turn(R):
    q = geom3.matrix_to_quat(R)
    assert abs(np.linalg.norm(q) - 1.0) < 1e-15
    np.testing.assert_allclose(geom3.quat_to_matrix(q), R, atol=1e-12)


@pytest.mark.parametrize(
    "raw, expected",
    [([2, 0, 0, 0], [1, 0, 0, 0]), ([-1, 0, 0, 0], [1, 0, 0, 0]), ([1, 1, 1, 1], [0.5, 0.5, 0.5, 0.5])],
)
def test_normalize_quat_examples(raw, expected):
    np.testing.assert_allclose(geom3.normalize_quat(raw), expected, atol=1e-16)


def test_normalize_quat_zero_w_sign_rule():
    np.testing.assert_array_equal(geom3.normalize_quat([0.0, 0.0, -2.0, 1.0]), [0.0, 0.0, 2.0, -1.0] / np.sqrt(5))


def test_normalize_quat_degenerate():
    with pytest.raises(DegenerateInputError):
        geom3.normalize_quat([1e-13, 0, 0, 0])


def test_quaternion_double_cover(rng):
    q = geom3.normalize_quat(rng.standard_normal((1000, 4)))
    for sign in (1.0, -1.0):
        back = geom3.matrix_to_quat(geom3.quat_to_matrix(sign * q))
        np.testing.assert_allclose(back, q, atol=1e-12)


def test_exp_map_quaternion_consistency(rng):
    v = rng.uniform(-np.pi, np.pi, size=(10_000, 3))
    R1 = geom3.rodrigues_to_matrix(v)
    R2 = geom3.quat_to_matrix(geom3.rotvec_to_quat(v))
    D = np.einsum("nji,njk->nik", R1, R2)
    # arccos of the trace is ill-conditioned near zero, use the antisymmetric part
    s = np.linalg.norm(np.stack([D[:, 2, 1] - D[:, 1, 2], D[:, 0, 2] - D[:, 2, 0], D[:, 1, 0] - D[:, 0, 1]], 1), axis=1)
    ang = np.arctan2(0.5 * s, 0.5 * (np.trace(D, axis1=1, axis2=2) - 1))
    assert ang.max() < 1e-12


# --- Euler ------------------------------------------------------------------------------------------


def test_euler_identity():
    np.testing.assert_array_equal(geom3.euler_intrinsic_to_matrix([0, 0, 0]), np.eye(3))
    np.testing.assert_array_equal(geom3.euler_extrinsic_to_matrix([0, 0, 0]), np.eye(3))


def test_euler_intrinsic_single_axis():
    np.testing.assert_allclose(geom3.euler_intrinsic_to_matrix([np.pi / 2, 0, 0]), rot_z(np.pi / 2), atol=1e-16)


def test_euler_intrinsic_is_product_of_factors():
    a, b, g = 0.1, 0.2, 0.3
    np.testing.assert_allclose(
        geom3.euler_intrinsic_to_matrix([a, b, g]), rot_z(a) @ rot_y(b) @ rot_x(g), atol=1e-15
    )


def test_euler_extrinsic_single_axis():
    np.testing.assert_allclose(geom3.euler_extrinsic_to_matrix([0.7, 0, 0]), rot_x(0.7), atol=1e-16)


def test_euler_extrinsic_intrinsic_duality():
    np.testing.assert_array_equal(
        geom3.euler_extrinsic_to_matrix([0.3, 0.2, 0.1]), geom3.euler_intrinsic_to_matrix([0.1, 0.2, 0.3])
    )


def test_extrinsic_is_fixed_axis_sequence():
    # applying Rx, then Ry, then Rz about the fixed frame composes on the left
    g, b, a = 0.4, -0.3, 1.1
    v = np.array([0.2, -1.0, 0.5])
    stepwise = rot_z(a) @ (rot_y(b) @ (rot_x(g) @ v))
    np.testing.assert_allclose(geom3.euler_extrinsic_to_matrix([g, b, a]) @ v, stepwise, atol=1e-15)


def test_matrix_to_euler_identity():
    np.testing.assert_array_equal(np.abs(geom3.matrix_to_euler(np.eye(3))), np.zeros(3))


def test_matrix_to_euler_gimbal_lock_branch():
    R = rot_y(np.pi / 2 - 1e-8)
    a, b, g = geom3.matrix_to_euler(R, "euler_int")
    assert abs(b - np.pi / 2) < 1e-7
    assert g == 0.0
    np.testing.assert_allclose(geom3.euler_intrinsic_to_matrix([a, b, g]), R, atol=1e-9)


@pytest.mark.parametrize("tag", ["euler_int", "euler_ext"])
def test_matrix_to_euler_roundtrip(rng, tag):
    R = geom3.random_rotations(rng, 5000)
    e = geom3.matrix_to_euler(R, tag)
    fwd = geom3.euler_intrinsic_to_matrix if tag == "euler_int" else geom3.euler_extrinsic_to_matrix
    assert np.max(np.abs(fwd(e) - R)) < 1e-9
    beta = e[:, 1]
    outer = e[:, [0, 2]]
    assert np.all(np.abs(beta) <= np.pi / 2) and np.all(outer > -np.pi) and np.all(outer <= np.pi)


def test_matrix_to_euler_unknown_convention():
    with pytest.raises(InvalidArgumentError):
        geom3.matrix_to_euler(np.eye(3), "xyz")


# --- projection -------------------------------------------------------------------------------------


def test_project_fixed_point(rng):
    R = geom3.random_rotations(rng, 100)
    assert np.max(np.abs(geom3.project_to_so3(R) - R)) < 1e-12


def test_project_scaling_invariance(rng):
    R = geom3.random_rotations(rng, 100)
    assert np.max(np.abs(geom3.project_to_so3(2.5 * R) - R)) < 1e-12


def _brute_force_nearest(M):
    best = None
    center = np.zeros(3)
    for half, step in ((0.05, 0.005), (0.006, 0.0005), (0.0006, 0.00005)):
        ax = np.arange(-half, half + step / 2, step)
        grid = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), -1).reshape(-1, 3) + center
        Rs = geom3.rodrigues_to_matrix(grid)
        cost = np.sum((Rs - M) ** 2, axis=(1, 2))
        center = grid[np.argmin(cost)]
        best = Rs[np.argmin(cost)]
    return best


def test_project_matches_brute_force_nearest_rotation(rng):
    for _ in range(3):
        M = np.eye(3) + 0.01 * rng.standard_normal((3, 3))
        np.testing.assert_allclose(geom3.project_to_so3(M), _brute_force_nearest(M), atol=1e-3)


def test_project_corrects_reflection():
    M = np.diag([1.0, 1.0, -1.0]) + 1e-3
    R = geom3.project_to_so3(M)
    assert geom3.is_so3(R)


def test_project_rank_deficient():
    with pytest.raises(DegenerateInputError):
        geom3.project_to_so3(np.diag([1.0, 1.0, 0.0]))


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=9, max_size=9))
def test_project_always_in_so3_and_idempotent(vals):
    M = np.array(vals).reshape(3, 3)
    try:
        R = geom3.project_to_so3(M)
    except DegenerateInputError:
        return
    assert geom3.is_so3(R)
    assert np.max(np.abs(geom3.project_to_so3(R) - R)) < 1e-12


# --- poses -------------------------------------------------------------------------------------------


def _random_pose(rng):
    return geom3.Pose(geom3.random_rotations(rng, 1)[0], rng.normal(size=3))


def test_relative_pose_of_equal_poses_is_identity(rng):
    p = _random_pose(rng)
    rel = geom3.relative_pose(p, p)
    assert geom3.pose_close(rel, geom3.Pose.identity(), 1e-15)


def test_relative_pose_from_identity(rng):
    p = _random_pose(rng)
    assert geom3.pose_close(geom3.relative_pose(geom3.Pose.identity(), p), p, 0.0)


def test_relative_pose_composition_oracle(rng):
    for _ in range(200):
        ref, v2 = _random_pose(rng), _random_pose(rng)
        rel = geom3.relative_pose(ref, v2)
        T = ref.matrix() @ rel.matrix()
        assert np.max(np.abs(T - v2.matrix())) < 1e-12
        # same result as the homogeneous inverse
        np.testing.assert_allclose(rel.matrix(), np.linalg.inv(ref.matrix()) @ v2.matrix(), atol=1e-12)


def test_group_axioms_1e4(rng):
    Rs = geom3.random_rotations(rng, 10_000)
    ts = rng.normal(size=(10_000, 3))
    worst = 0.0
    for R, t in zip(Rs, ts):
        a = geom3.Pose(R, t)
        e = geom3.compose(a, geom3.inverse(a))
        worst = max(worst, np.max(np.abs(e.rotation - np.eye(3))), np.max(np.abs(e.translation)))
    assert worst < 1e-12
    a = geom3.Pose(Rs[0], ts[0])
    assert geom3.pose_close(geom3.compose(geom3.Pose.identity(), a), a, 0.0)
    assert geom3.inverse(geom3.Pose.identity()) == geom3.Pose(np.eye(3), np.zeros(3))


def test_relative_of_composition(rng):
    for _ in range(500):
        a, x = _random_pose(rng), _random_pose(rng)
        assert geom3.pose_close(geom3.relative_pose(a, geom3.compose(a, x)), x, 1e-12)


def test_pose_rejects_non_rotation():
    with pytest.raises(DomainError):
        geom3.Pose(np.ones((3, 3)), np.zeros(3))


# --- tagged representations -------------------------------------------------------------------------


def test_identity_quat_repr_to_pose():
    p = geom3.repr_to_pose(geom3.RotationRepr("quat", [1, 0, 0, 0]), np.zeros(3))
    assert p == geom3.Pose.identity()


def test_matrix_flat_vector_is_row_major(rng):
    p = _random_pose(rng)
    y = geom3.pose_to_vector(p, "matrix")
    assert y.shape == (12,)
    R = p.rotation
    expected = [R[0, 0], R[0, 1], R[0, 2], R[1, 0], R[1, 1], R[1, 2], R[2, 0], R[2, 1], R[2, 2]]
    np.testing.assert_array_equal(y[:9], expected)
    np.testing.assert_array_equal(y[9:], p.translation)


@pytest.mark.parametrize("tag, length", [("rotvec", 6), ("euler_int", 6), ("euler_ext", 6), ("quat", 7), ("matrix", 12)])
def test_vector_lengths(tag, length):
    assert geom3.repr_dim(tag) == length
    assert geom3.pose_to_vector(geom3.Pose.identity(), tag).shape == (length,)


def test_euler_vector_orderings():
    p = geom3.Pose(rot_z(0.1) @ rot_y(0.2) @ rot_x(0.3), [1, 2, 3])
    np.testing.assert_allclose(geom3.pose_to_vector(p, "euler_int"), [0.1, 0.2, 0.3, 1, 2, 3], atol=1e-14)
    np.testing.assert_allclose(geom3.pose_to_vector(p, "euler_ext"), [0.3, 0.2, 0.1, 1, 2, 3], atol=1e-14)


def test_unknown_tag():
    with pytest.raises(InvalidArgumentError):
        geom3.pose_to_repr(geom3.Pose.identity(), "sixd")
    with pytest.raises(InvalidArgumentError):
        geom3.RotationRepr("dualquat", [0, 0, 0])


@pytest.mark.parametrize("tag", geom3.REPR_TAGS)
def test_all_tags_roundtrip_1e3(rng, tag):
    for _ in range(1000):
        p = _random_pose(rng)
        back = geom3.repr_to_pose(geom3.pose_to_repr(p, tag), p.translation)
        assert angle_between(back.rotation, p.rotation) < 1e-9
        y = geom3.pose_to_vector(p, tag)
        assert geom3.pose_close(geom3.vector_to_pose(y, tag), p, 1e-9)


@settings(max_examples=100, deadline=None)
@given(vec3)
def test_canonical_rotvec_norm_bound(v):
    w = geom3.canonical_rotvec(v)
    assert np.linalg.norm(w) <= np.pi + 1e-12
    np.testing.assert_allclose(geom3.rodrigues_to_matrix(w), geom3.rodrigues_to_matrix(v), atol=1e-9)
