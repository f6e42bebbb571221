import numpy as np
import pytest

from incarpose import geom3, labels
from incarpose.errors import EmptyOverlapError, InvalidArgumentError

from conftest import angle_between, rot_x


def _pose(rng, scale=1.0):
    return geom3.Pose(geom3.random_rotations(rng, 1)[0], scale * rng.normal(size=3))


def test_make_relative_target_matches_homogeneous_oracle(rng):
    ref, v2 = _pose(rng), _pose(rng)
    rel = labels.make_relative_target(ref, v2)
    np.testing.assert_allclose(rel.matrix(), np.linalg.inv(ref.matrix()) @ v2.matrix(), atol=1e-12)


def test_marker_identical_observations_give_identity(rng):
    obs = labels.MarkerObservation("a", 3, _pose(rng))
    rel = labels.marker_relative_pose(obs, obs)
    assert geom3.pose_close(rel, geom3.Pose.identity(), 1e-12)


def test_marker_forward_model(rng):
    # world -> camera extrinsics for two cameras and a marker placed in the world
    marker_world = _pose(rng)
    cam_r, cam_q = _pose(rng), _pose(rng)  # camera-to-world
    obs_r = geom3.compose(geom3.inverse(cam_r), marker_world)
    obs_q = geom3.compose(geom3.inverse(cam_q), marker_world)
    rel = labels.marker_relative_pose(labels.MarkerObservation("r", 1, obs_r), labels.MarkerObservation("q", 1, obs_q))
    expected = np.linalg.inv(cam_q.matrix()) @ cam_r.matrix()
    assert np.max(np.abs(rel.matrix() - expected)) < 1e-12


def test_marker_size_is_carried():
    obs = labels.MarkerObservation("a", 1, geom3.Pose.identity())
    assert obs.marker_size == 0.07


def test_marker_id_mismatch():
    a = labels.MarkerObservation("a", 1, geom3.Pose.identity())
    b = labels.MarkerObservation("b", 2, geom3.Pose.identity())
    with pytest.raises(InvalidArgumentError):
        labels.marker_relative_pose(a, b)


def test_marker_antisymmetry(rng):
    for _ in range(50):
        a = labels.MarkerObservation("a", 1, _pose(rng))
        b = labels.MarkerObservation("b", 1, _pose(rng))
        fwd = labels.marker_relative_pose(a, b)
        back = labels.marker_relative_pose(b, a)
        assert geom3.pose_close(fwd, geom3.inverse(back), 1e-12)


def test_aggregate_examples(rng):
    p = _pose(rng)
    assert labels.aggregate_marker_poses([p]) == p
    assert labels.aggregate_marker_poses([p, p]) == p
    with pytest.raises(InvalidArgumentError):
        labels.aggregate_marker_poses([])


def test_aggregate_double_cover(rng):
    # the same rotation entered through q and -q must not cancel
    q = geom3.normalize_quat(rng.normal(size=4))
    R1 = geom3.quat_to_matrix(q)
    R2 = geom3.quat_to_matrix(-q)
    out = labels.aggregate_marker_poses([geom3.Pose(R1, np.zeros(3)), geom3.Pose(R2, np.zeros(3))])
    assert angle_between(out.rotation, R1) < 1e-12


def test_aggregate_permutation_invariant(rng):
    base = geom3.random_rotations(rng, 1)[0]
    poses = [geom3.Pose(base @ geom3.rodrigues_to_matrix(0.05 * rng.normal(size=3)), rng.normal(size=3)) for _ in range(5)]
    a = labels.aggregate_marker_poses(poses)
    b = labels.aggregate_marker_poses(poses[::-1])
    assert geom3.is_so3(a.rotation)
    assert a == b
    # a symmetric spread about the base averages back to it
    w = 0.1 * np.array([1.0, 0.0, 0.0])
    sym = [geom3.Pose(base @ geom3.rodrigues_to_matrix(s * w), np.zeros(3)) for s in (1, -1)]
    assert angle_between(labels.aggregate_marker_poses(sym).rotation, base) < 1e-12


def test_relative_from_markers_requires_overlap():
    a = [labels.MarkerObservation("r", 1, geom3.Pose.identity())]
    b = [labels.MarkerObservation("q", 2, geom3.Pose.identity())]
    with pytest.raises(EmptyOverlapError):
        labels.relative_pose_from_markers(a, b)


def _traj(rng, n=6):
    return labels.Trajectory([(f"img{i}", _pose(rng, 0.3)) for i in range(n)])


def test_compare_identical(rng):
    a = _traj(rng)
    rows, summary = labels.compare_trajectories(a, a)
    assert all(r.rotation_error < 1e-12 for r in rows)
    # the direction metric is an arccos, which resolves about sqrt(machine eps) rad near 1
    assert all(r.direction_error is None or r.direction_error < 1e-5 for r in rows)
    assert summary["rotation_deg"]["count"] == 6


def test_compare_gate_on_small_displacement():
    a = labels.Trajectory([("x", geom3.Pose(np.eye(3), [0.05, 0, 0])), ("y", geom3.Pose(np.eye(3), [0.5, 0, 0]))])
    b = labels.Trajectory([("x", geom3.Pose(np.eye(3), [0, 0.05, 0])), ("y", geom3.Pose(np.eye(3), [0.5, 0, 0]))])
    rows, summary = labels.compare_trajectories(a, b, 0.1)
    assert rows[0].direction_error is None
    assert rows[1].direction_error == pytest.approx(0.0, abs=1e-9)
    assert summary["direction_deg"]["count"] == 1


def test_compare_constant_rotation_offset(rng):
    a = _traj(rng)
    b = labels.Trajectory([(i, geom3.Pose(p.rotation @ rot_x(np.radians(2.0)), p.translation)) for i, p in a.entries])
    rows, summary = labels.compare_trajectories(a, b)
    for r in rows:
        assert r.rotation_error == pytest.approx(2.0, abs=1e-9)
    assert summary["rotation_deg"]["max"] == pytest.approx(2.0, abs=1e-9)


def test_compare_scale_invariance(rng):
    a = _traj(rng)
    b = labels.Trajectory([(i, geom3.Pose(p.rotation, 7.5 * p.translation)) for i, p in a.entries])
    rows, _ = labels.compare_trajectories(a, b, 0.0)
    assert max(r.direction_error for r in rows) < 1e-6


def test_compare_summary_matches_sort_oracle(rng):
    a, b = _traj(rng, 9), _traj(rng, 9)
    rows, summary = labels.compare_trajectories(a, b, 0.0)
    vals = sorted(r.rotation_error for r in rows)
    assert summary["rotation_deg"]["median"] == vals[4]
    assert summary["rotation_deg"]["max"] == vals[-1]
    shuffled = labels.Trajectory(list(reversed(a.entries)))
    _, s2 = labels.compare_trajectories(shuffled, b, 0.0)
    assert s2["rotation_deg"]["median"] == summary["rotation_deg"]["median"]


def test_compare_no_overlap(rng):
    a = _traj(rng, 2)
    b = labels.Trajectory([("other", geom3.Pose.identity())])
    with pytest.raises(EmptyOverlapError):
        labels.compare_trajectories(a, b)


def test_trajectory_rejects_duplicate_ids():
    with pytest.raises(InvalidArgumentError):
        labels.Trajectory([("a", geom3.Pose.identity()), ("a", geom3.Pose.identity())])
