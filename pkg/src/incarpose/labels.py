"""Training targets and ground-truth tooling.

* reference-relative targets, T_rel = T_ref^-1 T_view
* relative camera pose from a marker seen in two images
* fusion of per-marker estimates
* comparison of two trajectories (e.g. marker-based vs SfM) with a
  displacement gate on direction errors
"""

from dataclasses import dataclass, field

import numpy as np

from . import geom3
from .errors import EmptyOverlapError, InvalidArgumentError
from .losses import direction_errors, geodesic_distance

DEFAULT_MARKER_SIZE_M = 0.07
DEFAULT_DISPLACEMENT_THRESHOLD_M = 0.1


def make_relative_target(ref, view2):
    return geom3.relative_pose(ref, view2)


@dataclass(frozen=True)
class MarkerObservation:
    image_id: str
    marker_id: int
    pose_cam_from_marker: geom3.Pose
    marker_size: float = DEFAULT_MARKER_SIZE_M

    def __post_init__(self):
        if not self.marker_size > 0:
            raise InvalidArgumentError(f"marker_size must be positive, got {self.marker_size}")


def marker_relative_pose(ref_obs, query_obs):
    """Transform from the reference camera frame to the query camera frame
    through a shared marker: T_query<-marker * (T_ref<-marker)^-1."""
    if ref_obs.marker_id != query_obs.marker_id:
        raise InvalidArgumentError(
            f"marker ids differ: reference sees {ref_obs.marker_id!r}, query sees {query_obs.marker_id!r}"
        )
    return geom3.compose(query_obs.pose_cam_from_marker, geom3.inverse(ref_obs.pose_cam_from_marker))


def aggregate_marker_poses(per_marker):
    """Fuse per-marker estimates of one relative pose.

    Rotation: chordal L2 mean of quaternions (dominant eigenvector of the sum
    of outer products, so q and -q count the same); translation: arithmetic mean.
    """
    poses = list(per_marker)
    if not poses:
        raise InvalidArgumentError("need at least one pose to aggregate")
    if all(p == poses[0] for p in poses[1:]):
        return poses[0]
    q = geom3.matrix_to_quat(np.stack([p.rotation for p in poses]))
    t = np.stack([p.translation for p in poses])
    # a canonical row order makes the float sums independent of input order
    order = np.lexsort(np.concatenate([q, t], axis=1).T[::-1])
    q, t = q[order], t[order]
    M = np.einsum("ni,nj->ij", q, q)
    _, vecs = np.linalg.eigh(M)
    q_mean = geom3.normalize_quat(vecs[:, -1])
    return geom3.Pose(geom3.quat_to_matrix(q_mean), np.mean(t, axis=0))


def relative_pose_from_markers(ref_observations, query_observations):
    """Relative pose from every marker seen in both images, fused into one estimate."""
    ref_by_id = {o.marker_id: o for o in ref_observations}
    shared = [o for o in query_observations if o.marker_id in ref_by_id]
    if not shared:
        raise EmptyOverlapError("reference and query images share no marker")
    shared.sort(key=lambda o: str(o.marker_id))
    return aggregate_marker_poses([marker_relative_pose(ref_by_id[o.marker_id], o) for o in shared])


@dataclass
class Trajectory:
    entries: list = field(default_factory=list)  # (image_id, Pose)
    frame_label: str = "standard_view"

    def __post_init__(self):
        ids = [i for i, _ in self.entries]
        if len(ids) != len(set(ids)):
            raise InvalidArgumentError("trajectory image ids must be unique")

    def as_dict(self):
        return dict(self.entries)

    def ids(self):
        return [i for i, _ in self.entries]


@dataclass(frozen=True)
class GtComparisonRow:
    image_id: str
    rotation_error: float  # degrees
    direction_error: float | None  # degrees, None below the displacement gate
    displacement: float  # meters, from the metric trajectory


def _summary(values):
    v = np.asarray([x for x in values if x is not None], dtype=np.float64)
    if v.size == 0:
        return {"max": None, "mean": None, "median": None, "count": 0}
    return {"max": float(v.max()), "mean": float(v.mean()), "median": float(np.median(v)), "count": int(v.size)}


def compare_trajectories(a, b, displacement_threshold_m=DEFAULT_DISPLACEMENT_THRESHOLD_M):
    """Per-frame rotation and translation-direction disagreement between two
    trajectories expressed relative to the same reference view.

    ``a`` is the metric trajectory (e.g. marker-based): its translation norm
    decides whether a frame's direction error is reported. Both trajectories
    are then scaled by their own RMS translation norm over the shared frames.
    Returns (rows, summary) with summary[column] = {max, mean, median, count}.
    """
    da, db = a.as_dict(), b.as_dict()
    shared = [i for i in a.ids() if i in db]
    if not shared:
        raise EmptyOverlapError("trajectories have no image ids in common")

    ta = np.stack([da[i].translation for i in shared])
    tb = np.stack([db[i].translation for i in shared])
    displacement = np.linalg.norm(ta, axis=1)

    def rms_normalized(t):
        rms = np.sqrt(np.mean(np.sum(t * t, axis=1)))
        return t / rms if rms > 0 else t

    ta_n, tb_n = rms_normalized(ta), rms_normalized(tb)
    rot = np.degrees(np.atleast_1d(geodesic_distance(
        np.stack([da[i].rotation for i in shared]), np.stack([db[i].rotation for i in shared])
    )))
    ang, valid = direction_errors(ta_n, tb_n)
    rows = []
    for k, image_id in enumerate(shared):
        eligible = displacement[k] > displacement_threshold_m and valid[k]
        rows.append(
            GtComparisonRow(
                image_id=image_id,
                rotation_error=float(rot[k]),
                direction_error=float(np.degrees(ang[k])) if eligible else None,
                displacement=float(displacement[k]),
            )
        )
    summary = {
        "rotation_deg": _summary(r.rotation_error for r in rows),
        "direction_deg": _summary(r.direction_error for r in rows),
    }
    return rows, summary
