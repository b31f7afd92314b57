"""Bearing predictions and per-landmark information via landmark marginalization.

For a landmark seen from keyframe ``c`` with unit bearing ``u`` (camera
frame) the collinearity constraint

    [u]x R_wc^T (rho - p_c - R_c t_cam) = 0

is linear in the robot position ``p_c`` and the landmark ``rho`` once the
attitudes are known.  Stacking the visible frames gives ``z = F x + E rho``;
eliminating ``rho`` yields the landmark's contribution to the state
information, ``F^T (I - E (E^T E)^-1 E^T) F``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from vinselect.sim_world import CameraModel, Landmark, Trajectory

TRIANGULATION_RTOL = 1e-8


class DegenerateTrackError(ValueError):
    """The landmark cannot be triangulated from its visible frames."""


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def predict_bearing(
    rotation: np.ndarray,
    position: np.ndarray,
    camera: CameraModel,
    landmark_position: np.ndarray,
) -> np.ndarray | None:
    """Unit bearing of the landmark in the camera frame, or None if not visible."""
    R_wc = rotation @ camera.extrinsic_rotation
    t_wc = position + rotation @ camera.extrinsic_translation
    p_cam = R_wc.T @ (np.asarray(landmark_position, dtype=float) - t_wc)
    if not camera.in_image(p_cam):
        return None
    return p_cam / np.linalg.norm(p_cam)


@dataclass(frozen=True)
class FeatureMatrices:
    """Stacked bearing constraints of one landmark over its visible frames.

    Row block ``c`` of ``F`` is ``[u]x R_wc^T`` on the position columns of the
    frame and zero elsewhere; the matching block of ``E`` is its negative.
    """

    F: np.ndarray  # (3n, 9(H+1))
    E: np.ndarray  # (3n, 3)
    visible_frames: tuple[int, ...]
    landmark_id: int
    bearings: np.ndarray  # (n, 3) camera-frame unit vectors
    cam_rotations: np.ndarray  # (n, 3, 3) world-from-camera

    @property
    def n_frames(self) -> int:
        return len(self.visible_frames)

    @property
    def is_empty(self) -> bool:
        return self.n_frames == 0

    def blocks(self) -> np.ndarray:
        """Nonzero 3x3 blocks of F, one per visible frame."""
        return np.stack([skew(u) @ R.T for u, R in zip(self.bearings, self.cam_rotations)]) if self.n_frames else np.zeros((0, 3, 3))


def _assemble(landmark_id, frames, bearings, cam_rots, state_dim) -> FeatureMatrices:
    n = len(frames)
    F = np.zeros((3 * n, state_dim))
    E = np.zeros((3 * n, 3))
    for r, (c, u, R_wc) in enumerate(zip(frames, bearings, cam_rots)):
        blk = skew(u) @ R_wc.T
        F[3 * r : 3 * r + 3, 9 * c : 9 * c + 3] = blk
        E[3 * r : 3 * r + 3] = -blk
    return FeatureMatrices(
        F=F,
        E=E,
        visible_frames=tuple(frames),
        landmark_id=landmark_id,
        bearings=np.asarray(bearings, dtype=float).reshape(n, 3),
        cam_rotations=np.asarray(cam_rots, dtype=float).reshape(n, 3, 3),
    )


def build_feature_matrices(trajectory: Trajectory, camera: CameraModel, landmark: Landmark) -> FeatureMatrices:
    """Predict bearings along the trajectory and stack F and E for the visible frames.

    An empty result (no visible frame) is signalled by ``fm.is_empty``.
    """
    if trajectory.n_frames == 0:
        raise ValueError("empty horizon")
    frames, bearings, rots = [], [], []
    for c in range(trajectory.n_frames):
        u = predict_bearing(trajectory.rotations[c], trajectory.positions[c], camera, landmark.position)
        if u is None:
            continue
        frames.append(c)
        bearings.append(u)
        rots.append(trajectory.rotations[c] @ camera.extrinsic_rotation)
    return _assemble(landmark.id, frames, bearings, rots, trajectory.state_dim)


def truncate_track(fm: FeatureMatrices, n_frames: int) -> FeatureMatrices:
    """Keep only the first ``n_frames`` observations of a track."""
    return _assemble(
        fm.landmark_id,
        fm.visible_frames[:n_frames],
        fm.bearings[:n_frames],
        fm.cam_rotations[:n_frames],
        fm.F.shape[1],
    )


@dataclass(frozen=True)
class Triangulability:
    ok: bool
    condition_number: float


def triangulability(fm: FeatureMatrices) -> Triangulability:
    """ok iff at least two views and E^T E is well conditioned."""
    if fm.n_frames < 2:
        return Triangulability(False, np.inf)
    ev = np.linalg.eigvalsh(fm.E.T @ fm.E)
    if not ev[0] > TRIANGULATION_RTOL * ev[-1]:
        return Triangulability(False, np.inf)
    return Triangulability(True, float(ev[-1] / ev[0]))


@dataclass(frozen=True)
class FeatureDelta:
    """Information a landmark adds to the horizon state after marginalizing it.

    ``delta`` already includes the isotropic noise weight; ``track_prob`` is
    applied by the objectives, never baked into ``delta``.
    """

    delta: np.ndarray
    landmark_id: int
    track_prob: float
    n_frames: int
    weight: float = 1.0

    @property
    def weighted(self) -> np.ndarray:
        return self.track_prob * self.delta


def landmark_projector(E: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the complement of range(E)."""
    c = scipy.linalg.cho_factor(E.T @ E, lower=True)
    return np.eye(E.shape[0]) - E @ scipy.linalg.cho_solve(c, E.T)


def feature_delta(fm: FeatureMatrices, track_prob: float = 1.0, weight: float = 1.0) -> FeatureDelta:
    """Schur complement of the landmark block: ``w (F^T F - F^T E (E^T E)^-1 E^T F)``."""
    if not triangulability(fm).ok:
        raise DegenerateTrackError(f"landmark {fm.landmark_id} cannot be triangulated")
    # work on the position columns of the visible frames only
    cols = np.concatenate([np.arange(9 * c, 9 * c + 3) for c in fm.visible_frames])
    Fc = fm.F[:, cols]
    EtE = fm.E.T @ fm.E
    FtE = Fc.T @ fm.E
    c = scipy.linalg.cho_factor(EtE, lower=True)
    small = Fc.T @ Fc - FtE @ scipy.linalg.cho_solve(c, FtE.T)
    small = weight * 0.5 * (small + small.T)
    dim = fm.F.shape[1]
    delta = np.zeros((dim, dim))
    delta[np.ix_(cols, cols)] = small
    return FeatureDelta(delta=delta, landmark_id=fm.landmark_id, track_prob=float(track_prob), n_frames=fm.n_frames, weight=float(weight))


def vision_measurement(fm: FeatureMatrices, camera: CameraModel, noise: np.ndarray | None = None) -> np.ndarray:
    """Stacked ``z = F x + E rho = -[u]x R_cam^T t_cam`` (plus residual noise)."""
    R, t = camera.extrinsic_rotation, camera.extrinsic_translation
    z = np.concatenate([-skew(u) @ R.T @ t for u in fm.bearings]) if fm.n_frames else np.zeros(0)
    if noise is not None:
        z = z + noise
    return z


def mean_range(trajectory: Trajectory, camera: CameraModel, landmark: Landmark, fm: FeatureMatrices) -> float:
    """Average camera-to-landmark distance over the visible frames."""
    d = [
        np.linalg.norm(landmark.position - trajectory.positions[c] - trajectory.rotations[c] @ camera.extrinsic_translation)
        for c in fm.visible_frames
    ]
    return float(np.mean(d))


def range_weight(trajectory: Trajectory, camera: CameraModel, landmark: Landmark, fm: FeatureMatrices, pixel_sigma: float) -> float:
    """Isotropic weight ``1/sigma^2`` with residual sigma = range * pixel_sigma / focal.

    The collinearity residual is metric, so an angular error grows with the
    distance to the landmark.
    """
    sigma = mean_range(trajectory, camera, landmark, fm) * pixel_sigma / camera.focal
    return 1.0 / sigma**2


def candidate_features(
    trajectory: Trajectory,
    camera: CameraModel,
    landmarks: Sequence[Landmark],
    weight: float | Callable[[Landmark, FeatureMatrices], float] = 1.0,
    require_first_frame: bool = False,
) -> tuple[list[Landmark], list[FeatureMatrices], list[FeatureDelta]]:
    """Landmarks that are visible and triangulable over the horizon, with their deltas.

    ``weight`` is a constant or a function of (landmark, feature matrices).
    With ``require_first_frame`` only landmarks seen in the current keyframe
    are candidates.
    """
    kept, fms, deltas = [], [], []
    for lm in landmarks:
        fm = build_feature_matrices(trajectory, camera, lm)
        if require_first_frame and (fm.is_empty or fm.visible_frames[0] != 0):
            continue
        if not triangulability(fm).ok:
            continue
        w = weight(lm, fm) if callable(weight) else weight
        kept.append(lm)
        fms.append(fm)
        deltas.append(feature_delta(fm, lm.track_prob, w))
    return kept, fms, deltas
