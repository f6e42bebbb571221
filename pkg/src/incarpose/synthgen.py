"""Procedural two-view data: point-sprite cabin scenes rendered through an
equidistant fisheye camera from perturbed copies of a standard view.
"""

from dataclasses import dataclass

import numpy as np

from . import geom3, kernels
from .errors import InvalidArgumentError
from .labels import make_relative_target

SPLAT_CUTOFF = 3.0
MIN_SIGMA_PX = 0.5


@dataclass(frozen=True)
class Scene:
    """Points in meters with intensity in [0, 1] and a metric sprite radius."""

    points: np.ndarray
    intensity: np.ndarray
    radius: np.ndarray
    seed: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if pts.shape[0] < 1:
            raise InvalidArgumentError("scene needs at least one point")
        if np.ptp(pts, axis=0).max() > 3.0:
            raise InvalidArgumentError("scene points must fit in a 3 m box")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "intensity", np.asarray(self.intensity, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "radius", np.asarray(self.radius, dtype=np.float64).reshape(-1))


@dataclass(frozen=True)
class SamplingRanges:
    """Half-ranges of the uniform perturbation around the standard view."""

    rot_x_deg: float = 80.0
    rot_y_deg: float = 80.0
    rot_z_deg: float = 50.0
    trans_m: float = 0.2

    def __post_init__(self):
        if min(self.rot_x_deg, self.rot_y_deg, self.rot_z_deg, self.trans_m) < 0:
            raise InvalidArgumentError("sampling half-ranges must be non-negative")


@dataclass(frozen=True)
class FisheyeCamera:
    """Equidistant fisheye, r = focal * theta, square image."""

    focal: float = 10.0
    resolution: int = 32
    fov_deg: float = 180.0

    def __post_init__(self):
        if not self.focal > 0:
            raise InvalidArgumentError("focal must be positive")
        if self.resolution < 1:
            raise InvalidArgumentError("resolution must be positive")

    @property
    def center(self):
        return 0.5 * self.resolution, 0.5 * self.resolution


# mean wall brightness per box face (-x, +x, -y roof, +y floor, -z rear, +z front);
# every cabin shares this layout, like seats and windows in one car model
FACE_SHADE = np.array([0.45, 0.6, 0.85, 0.2, 0.35, 1.0])
# a few large fixtures (headrests, dashboard) shared by all cabins, in meters
FIXTURES = np.array([[-0.45, 0.1, -0.6], [0.45, 0.1, -0.6], [0.0, 0.35, 0.9], [0.7, -0.3, 0.5]])


def cabin_scene(seed, n_points=160, half_extent=(1.2, 0.8, 1.2)):
    """Points on the walls of a box around the standard-view camera, plus fixtures.

    Wall shading and fixture layout are common to all cabins; point placement,
    box shape and clutter brightness vary with ``seed``.
    """
    rng = np.random.default_rng(seed)
    hx, hy, hz = half_extent
    # jitter the box so scenes differ in shape, not only texture
    ext = np.array([hx, hy, hz]) * rng.uniform(0.75, 1.0, size=3)
    center = rng.uniform(-0.15, 0.15, size=3)
    face = rng.integers(0, 6, size=n_points)
    pts = rng.uniform(-1.0, 1.0, size=(n_points, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, -1.0, 1.0)
    pts[np.arange(n_points), axis] = sign
    pts = pts * ext + center
    intensity = FACE_SHADE[face] * rng.uniform(0.6, 1.0, size=n_points)
    radius = rng.uniform(0.03, 0.09, size=n_points)
    fix = FIXTURES + rng.uniform(-0.08, 0.08, size=FIXTURES.shape)
    pts = np.concatenate([pts, fix])
    intensity = np.concatenate([intensity, rng.uniform(0.8, 1.0, size=len(fix))])
    radius = np.concatenate([radius, rng.uniform(0.12, 0.18, size=len(fix))])
    return Scene(pts, intensity, radius, seed=seed)


def project_points(points_cam, camera):
    """Equidistant projection of camera-frame points (z forward, x right, y down).

    Returns (u, v, theta); pixel (j, i) covers [j, j + 1) x [i, i + 1).
    """
    p = np.asarray(points_cam, dtype=np.float64).reshape(-1, 3)
    rho = np.hypot(p[:, 0], p[:, 1])
    theta = np.arctan2(rho, p[:, 2])
    phi = np.arctan2(p[:, 1], p[:, 0])
    r = camera.focal * theta
    cx, cy = camera.center
    return cx + r * np.cos(phi), cy + r * np.sin(phi), theta


def render_fisheye(scene, camera, pose):
    """Render ``scene`` seen from camera ``pose`` (camera-to-world) as a (H, W, 1) image."""
    pc = (scene.points - pose.translation) @ pose.rotation
    u, v, theta = project_points(pc, camera)
    dist = np.linalg.norm(pc, axis=1)
    # theta < fov/2 <= 90 deg also rejects everything behind the image plane
    keep = (theta < 0.5 * np.deg2rad(min(camera.fov_deg, 180.0))) & (dist > 1e-6)
    safe = np.where(keep, dist, 1.0)
    sigma = np.maximum(camera.focal * scene.radius / safe, MIN_SIGMA_PX)
    img = kernels.splat_gaussians(
        np.ascontiguousarray(u[keep]),
        np.ascontiguousarray(v[keep]),
        np.ascontiguousarray(sigma[keep]),
        np.ascontiguousarray(scene.intensity[keep]),
        camera.resolution,
        camera.resolution,
        SPLAT_CUTOFF,
    )
    return np.clip(img, 0.0, 1.0)[:, :, None]


def sample_pose_pair(ranges, reference, rng):
    """Reference view and a second view perturbed in the camera frame.

    The perturbation rotation is fixed-axis x, then y, then z with independent
    uniform angles; the translation is uniform per camera axis.
    """
    angles = np.deg2rad(
        [
            rng.uniform(-ranges.rot_x_deg, ranges.rot_x_deg),
            rng.uniform(-ranges.rot_y_deg, ranges.rot_y_deg),
            rng.uniform(-ranges.rot_z_deg, ranges.rot_z_deg),
        ]
    )
    t = rng.uniform(-ranges.trans_m, ranges.trans_m, size=3)
    delta = geom3.Pose(geom3.euler_extrinsic_to_matrix(angles), t)
    return reference, geom3.compose(reference, delta)


@dataclass(frozen=True)
class PairRecord:
    img_ref: np.ndarray
    img_2: np.ndarray
    target: geom3.Pose
    pose_ref: geom3.Pose
    pose_2: geom3.Pose
    scene_key: tuple


def _seed_for(*keys):
    return np.random.SeedSequence([int(k) for k in keys])


def make_dataset(n_pairs, scene_seed, ranges=SamplingRanges(), camera=FisheyeCamera(), pairs_per_scene=4,
                 reference=None):
    """Deterministic list of :class:`PairRecord`.

    Pair i uses scene (scene_seed, i // pairs_per_scene); disjoint
    ``scene_seed`` values therefore give disjoint scene sets, which is how
    train and validation splits are separated.
    """
    if n_pairs < 1:
        raise InvalidArgumentError("n_pairs must be >= 1")
    if pairs_per_scene < 1:
        raise InvalidArgumentError("pairs_per_scene must be >= 1")
    reference = reference or geom3.Pose.identity()
    records = []
    scene = None
    ref_img = None
    for i in range(n_pairs):
        scene_idx = i // pairs_per_scene
        if i % pairs_per_scene == 0:
            seed = int(_seed_for(scene_seed, scene_idx).generate_state(1)[0])
            scene = cabin_scene(seed)
            ref_img = render_fisheye(scene, camera, reference)
        rng = np.random.default_rng(_seed_for(scene_seed, scene_idx, i, 1))
        pose_ref, pose_2 = sample_pose_pair(ranges, reference, rng)
        records.append(
            PairRecord(
                img_ref=ref_img,
                img_2=render_fisheye(scene, camera, pose_2),
                target=make_relative_target(pose_ref, pose_2),
                pose_ref=pose_ref,
                pose_2=pose_2,
                scene_key=(int(scene_seed), scene_idx),
            )
        )
    return records


def train_val_split(n_train, n_val, seed=0, **kwargs):
    """Two datasets generated from disjoint scene seeds."""
    return make_dataset(n_train, 2 * seed, **kwargs), make_dataset(n_val, 2 * seed + 1, **kwargs)
