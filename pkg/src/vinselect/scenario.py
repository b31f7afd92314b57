"""Assemble selection problems (prior-plus-IMU information and candidate deltas) from a world."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from vinselect.imu_model import ImuBlock, InfoMatrix, accumulate_prior_info, build_imu_blocks, prior_information
from vinselect.sim_world import (
    CameraModel,
    ImuParams,
    Landmark,
    Trajectory,
    make_straight_trajectory,
)
from vinselect.vision_model import FeatureDelta, FeatureMatrices, candidate_features

# Prior covariances at selection time: position, velocity, accelerometer bias.
DEFAULT_PRIOR_COV = (1e-2, 1e-2, 1e-4)


@dataclass(frozen=True)
class Problem:
    trajectory: Trajectory
    imu: ImuParams
    camera: CameraModel
    prior_info: np.ndarray
    imu_blocks: list[ImuBlock]
    omega_bar: InfoMatrix
    landmarks: list[Landmark]
    fms: list[FeatureMatrices]
    deltas: list[FeatureDelta]
    vision_weight: float = 1.0

    @property
    def n_candidates(self) -> int:
        return len(self.deltas)


def build_problem(
    trajectory: Trajectory,
    imu: ImuParams,
    camera: CameraModel,
    landmarks: Sequence[Landmark],
    prior_cov: Sequence[float] = DEFAULT_PRIOR_COV,
    vision_weight: float = 1.0,
) -> Problem:
    prior = prior_information(*prior_cov)
    blocks = build_imu_blocks(trajectory, imu)
    omega_bar = accumulate_prior_info(blocks, prior, trajectory.horizon)
    kept, fms, deltas = candidate_features(trajectory, camera, landmarks, weight=vision_weight)
    return Problem(trajectory, imu, camera, prior, blocks, omega_bar, kept, fms, deltas, vision_weight)


def sample_candidates(
    trajectory: Trajectory,
    camera: CameraModel,
    n: int,
    box: Sequence[Sequence[float]],
    rng: np.random.Generator,
    score_range: Sequence[float] = (0.0, 1.0),
    max_draws: int = 200_000,
) -> list[Landmark]:
    """Rejection-sample ``n`` landmarks that are triangulable over the trajectory."""
    from vinselect.vision_model import build_feature_matrices, triangulability

    lo, hi = (np.asarray(b, dtype=float) for b in box)
    out: list[Landmark] = []
    draws = 0
    while len(out) < n:
        if draws >= max_draws:
            raise RuntimeError(f"only {len(out)} of {n} triangulable landmarks after {draws} draws")
        p = rng.uniform(lo, hi)
        score = float(rng.uniform(*score_range))
        draws += 1
        lm = Landmark(id=len(out), position=p, score=score)
        if triangulability(build_feature_matrices(trajectory, camera, lm)).ok:
            out.append(lm)
    return out


STRAIGHT_BOX = ((1.0, -8.0, -5.0), (25.0, 8.0, 5.0))


def straight_line_instance(
    n_features: int,
    seed: int,
    speed: float = 2.0,
    horizon_s: float = 2.5,
    keyframe_dt: float = 0.5,
    imu: ImuParams | None = None,
    camera: CameraModel | None = None,
    box=STRAIGHT_BOX,
    track_probs: bool = False,
) -> Problem:
    """Robot on a straight line with ``n_features`` triangulable landmarks ahead.

    Defaults reproduce the desk-scale benchmark: 2 m/s, 0.01 s IMU period,
    0.5 s keyframes, 2.5 s horizon, identity vision whitening and unit track
    probabilities (set ``track_probs`` to draw them from the scores).
    """
    imu = imu or ImuParams()
    camera = camera or CameraModel(keyframe_dt=keyframe_dt)
    traj = make_straight_trajectory(speed, horizon_s, keyframe_dt, imu.delta)
    rng = np.random.default_rng(seed)
    lms = sample_candidates(traj, camera, n_features, box, rng)
    if track_probs:
        from vinselect.sim_world import score_to_track_prob

        lms = [Landmark(lm.id, lm.position, lm.score, score_to_track_prob(lm.score, 0.0, 1.0, 0.5)) for lm in lms]
    return build_problem(traj, imu, camera, lms)
