"""Synthetic worlds: trajectories, landmark fields, sensor parameters and noise.

All randomness goes through :func:`numpy.random.default_rng` (PCG64 bit
generator), seeded explicitly, so every fixture is reproducible across
platforms.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

GRAVITY = np.array([0.0, 0.0, -9.81])

# Camera looking along body +x, image x to body -y, image y to body -z.
FORWARD_CAMERA = np.array(
    [
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)


class ParameterError(ValueError):
    """Raised for physically meaningless constructor arguments."""


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _check_rotation(R: np.ndarray, name: str, tol: float = 1e-9) -> None:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ParameterError(f"{name} must be 3x3, got {R.shape}")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ParameterError(f"{name} is not a proper rotation")


@dataclass(frozen=True)
class ImuParams:
    """Accelerometer model.

    ``delta`` is the sampling period [s]; noise densities are continuous-time
    (m/(s^2 sqrt(Hz)) for white noise, m/(s^3 sqrt(Hz)) for the bias walk).
    """

    delta: float = 0.01
    accel_noise_density: float = 0.02
    bias_noise_density: float = 0.03
    gravity: tuple[float, float, float] = (0.0, 0.0, -9.81)

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError("delta must be positive")
        if self.accel_noise_density < 0 or self.bias_noise_density < 0:
            raise ParameterError("noise densities must be nonnegative")

    @property
    def accel_sigma(self) -> float:
        """Per-sample standard deviation, density / sqrt(delta)."""
        return self.accel_noise_density / math.sqrt(self.delta)

    @property
    def gravity_vector(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)

    def bias_walk_cov(self, dt: float) -> np.ndarray:
        return (self.bias_noise_density**2) * dt * np.eye(3)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera rigidly attached to the IMU.

    The principal point sits at the image center.  A landmark is visible when
    its depth is positive and its projection lies strictly inside the image,
    shrunk by ``border`` pixels on every side.
    """

    focal: float = 315.0
    image_size: tuple[int, int] = (752, 480)
    extrinsic_rotation: np.ndarray = field(default_factory=lambda: FORWARD_CAMERA.copy())
    extrinsic_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    keyframe_dt: float = 0.5
    border: float = 0.0

    def __post_init__(self):
        if not self.focal > 0:
            raise ParameterError("focal must be positive")
        if not self.keyframe_dt > 0:
            raise ParameterError("keyframe_dt must be positive")
        object.__setattr__(self, "extrinsic_rotation", np.asarray(self.extrinsic_rotation, dtype=float))
        object.__setattr__(self, "extrinsic_translation", np.asarray(self.extrinsic_translation, dtype=float))
        _check_rotation(self.extrinsic_rotation, "extrinsic_rotation")

    def project(self, point_cam: np.ndarray) -> tuple[float, float]:
        w, h = self.image_size
        x, y, z = point_cam
        return self.focal * x / z + 0.5 * w, self.focal * y / z + 0.5 * h

    def in_image(self, point_cam: np.ndarray) -> bool:
        if not point_cam[2] > 0:
            return False
        u, v = self.project(point_cam)
        w, h = self.image_size
        b = self.border
        return b < u < w - b and b < v < h - b


@dataclass(frozen=True)
class Trajectory:
    """Known future motion sampled at keyframes and at every IMU tick.

    Keyframe ``k`` is followed by ``ticks_per_keyframe`` IMU samples; tick
    ``i`` of interval ``k`` carries the body rotation and the world-frame
    acceleration that is held constant until the next tick.
    """

    keyframe_times: np.ndarray  # (H+1,)
    rotations: np.ndarray  # (H+1, 3, 3) world-from-body
    positions: np.ndarray  # (H+1, 3)
    velocities: np.ndarray  # (H+1, 3)
    imu_subsample_rotations: np.ndarray  # (H, m, 3, 3)
    imu_accelerations: np.ndarray  # (H, m, 3) world frame
    imu_dt: float

    @property
    def n_frames(self) -> int:
        return len(self.keyframe_times)

    @property
    def horizon(self) -> int:
        return self.n_frames - 1

    @property
    def ticks_per_keyframe(self) -> int:
        return self.imu_subsample_rotations.shape[1]

    @property
    def state_dim(self) -> int:
        return 9 * self.n_frames

    def window(self, start: int, n_frames: int) -> "Trajectory":
        """Sub-trajectory of ``n_frames`` keyframes beginning at ``start``."""
        stop = start + n_frames
        if start < 0 or n_frames < 1 or stop > self.n_frames:
            raise ParameterError(f"window [{start}, {stop}) outside trajectory of {self.n_frames} frames")
        return Trajectory(
            keyframe_times=self.keyframe_times[start:stop],
            rotations=self.rotations[start:stop],
            positions=self.positions[start:stop],
            velocities=self.velocities[start:stop],
            imu_subsample_rotations=self.imu_subsample_rotations[start : stop - 1],
            imu_accelerations=self.imu_accelerations[start : stop - 1],
            imu_dt=self.imu_dt,
        )

    def to_csv(self) -> str:
        """One row per keyframe: frame, t, position, velocity, row-major rotation."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["frame", "t", "px", "py", "pz", "vx", "vy", "vz"]
        header += [f"r{i}{j}" for i in range(3) for j in range(3)]
        writer.writerow(header)
        for k in range(self.n_frames):
            row = [k, self.keyframe_times[k], *self.positions[k], *self.velocities[k], *self.rotations[k].ravel()]
            writer.writerow([row[0]] + [format(float(x), ".17g") for x in row[1:]])
        return buf.getvalue()


@dataclass(frozen=True)
class Landmark:
    id: int
    position: np.ndarray
    score: float = 1.0
    track_prob: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if not 0.0 <= self.track_prob <= 1.0:
            raise ParameterError(f"track_prob {self.track_prob} outside [0, 1]")


def landmarks_to_csv(landmarks: Sequence[Landmark]) -> str:
    """Columns: id, x, y, z, score, track_prob."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "x", "y", "z", "score", "track_prob"])
    for lm in landmarks:
        vals = [*lm.position, lm.score, lm.track_prob]
        writer.writerow([lm.id] + [format(float(v), ".17g") for v in vals])
    return buf.getvalue()


def landmarks_from_csv(text: str) -> list[Landmark]:
    rows = csv.DictReader(io.StringIO(text))
    return [
        Landmark(
            id=int(r["id"]),
            position=np.array([float(r["x"]), float(r["y"]), float(r["z"])]),
            score=float(r["score"]),
            track_prob=float(r["track_prob"]),
        )
        for r in rows
    ]


def _timing(duration: float, keyframe_dt: float, imu_dt: float) -> tuple[int, int]:
    if not (duration >= keyframe_dt >= imu_dt > 0):
        raise ParameterError("need duration >= keyframe_dt >= imu_dt > 0")
    ticks = keyframe_dt / imu_dt
    m = int(round(ticks))
    if abs(ticks - m) > 1e-6:
        raise ParameterError("keyframe_dt must be an integer multiple of imu_dt")
    n_intervals = int(math.floor(duration / keyframe_dt + 1e-9))
    return n_intervals, m


def make_straight_trajectory(
    speed: float,
    duration: float,
    keyframe_dt: float,
    imu_dt: float,
    start: Sequence[float] = (0.0, 0.0, 0.0),
) -> Trajectory:
    """Constant-velocity motion along world +x with identity attitude."""
    H, m = _timing(duration, keyframe_dt, imu_dt)
    times = keyframe_dt * np.arange(H + 1)
    v = np.array([speed, 0.0, 0.0])
    p0 = np.asarray(start, dtype=float)
    return Trajectory(
        keyframe_times=times,
        rotations=np.broadcast_to(np.eye(3), (H + 1, 3, 3)).copy(),
        positions=p0 + times[:, None] * v,
        velocities=np.broadcast_to(v, (H + 1, 3)).copy(),
        imu_subsample_rotations=np.broadcast_to(np.eye(3), (H, m, 3, 3)).copy(),
        imu_accelerations=np.zeros((H, m, 3)),
        imu_dt=imu_dt,
    )


def make_circular_trajectory(
    radius: float,
    angular_rate: float,
    vertical_amplitude: float,
    vertical_freq: float,
    duration: float,
    keyframe_dt: float,
    imu_dt: float,
    height: float = 0.0,
) -> Trajectory:
    """Circle through the origin (center at (0, radius)) with a sinusoidal height.

    The body yaw follows the horizontal tangent.  Velocities are analytic at
    every tick; each tick's acceleration is the exact velocity increment over
    the tick, and positions are integrated with the same discrete kinematics
    the IMU model uses, so the keyframe states satisfy the IMU model exactly.
    """
    if not radius > 0:
        raise ParameterError("radius must be positive")
    H, m = _timing(duration, keyframe_dt, imu_dt)
    n_ticks = H * m
    t = imu_dt * np.arange(n_ticks + 1)
    theta = angular_rate * t
    wz = 2.0 * math.pi * vertical_freq
    vel = np.stack(
        [
            radius * angular_rate * np.cos(theta),
            radius * angular_rate * np.sin(theta),
            vertical_amplitude * wz * np.cos(wz * t),
        ],
        axis=1,
    )
    acc = np.diff(vel, axis=0) / imu_dt
    steps = vel[:-1] * imu_dt + 0.5 * acc * imu_dt**2
    pos = np.vstack([np.zeros(3), np.cumsum(steps, axis=0)])
    pos[:, 2] += height
    rots = np.stack([rot_z(a) for a in theta])
    kf = np.arange(H + 1) * m
    return Trajectory(
        keyframe_times=t[kf],
        rotations=rots[kf],
        positions=pos[kf],
        velocities=vel[kf],
        imu_subsample_rotations=rots[:-1].reshape(H, m, 3, 3),
        imu_accelerations=acc.reshape(H, m, 3),
        imu_dt=imu_dt,
    )


def horizontal_arc_length(radius: float, angular_rate: float, duration: float) -> float:
    return radius * abs(angular_rate) * duration


def sample_landmarks(
    count: int,
    bounding_box: Sequence[Sequence[float]],
    score_range: Sequence[float] = (0.0, 1.0),
    seed: int = 0,
    first_id: int = 0,
) -> list[Landmark]:
    """Uniform points in an axis-aligned box with uniform synthetic scores."""
    if count < 0:
        raise ParameterError("count must be nonnegative")
    lo, hi = (np.asarray(b, dtype=float) for b in bounding_box)
    if lo.shape != (3,) or not np.all(hi > lo):
        raise ParameterError("bounding box must be nondegenerate [lo, hi] in 3D")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(count, 3))
    scores = rng.uniform(score_range[0], score_range[1], size=count)
    return [Landmark(id=first_id + i, position=pts[i], score=float(scores[i])) for i in range(count)]


def score_to_track_prob(score: float, score_min: float, score_max: float, p_floor: float = 0.5) -> float:
    """Affine map of the clamped score onto ``[p_floor, 1]``."""
    if not score_max > score_min:
        raise ParameterError("score_max must exceed score_min")
    if not 0.0 <= p_floor < 1.0:
        raise ParameterError("p_floor must lie in [0, 1)")
    x = (min(max(score, score_min), score_max) - score_min) / (score_max - score_min)
    return p_floor + (1.0 - p_floor) * x


@dataclass(frozen=True)
class MeasurementLog:
    """One noise realization over a trajectory.

    ``accel`` holds body-frame accelerometer readings per keyframe interval
    and tick; ``biases`` the true accelerometer bias at each keyframe
    (constant within an interval).  Vision noise is drawn for every
    (landmark, frame) pair in the linear residual space as standard normal
    draws; consumers scale them by the feature's residual standard deviation
    and only the rows of visible frames are used.
    """

    accel: np.ndarray  # (H, m, 3)
    accel_noise: np.ndarray  # (H, m, 3)
    biases: np.ndarray  # (H+1, 3)
    prior_measurement: np.ndarray  # (9,)
    vision_noise: np.ndarray  # (L, H+1, 3), unit variance
    landmark_ids: tuple[int, ...]
    vision_sigma: float  # angular pixel noise, pixel_sigma / focal

    def vision_noise_for(self, landmark_id: int, frames: Sequence[int], sigma: float = 1.0) -> np.ndarray:
        row = self.landmark_ids.index(landmark_id)
        return sigma * self.vision_noise[row, list(frames)].reshape(-1)


def simulate_measurement_noise(
    trajectory: Trajectory,
    landmarks: Sequence[Landmark],
    imu: ImuParams,
    camera: CameraModel,
    pixel_sigma: float,
    seed: int,
    prior_cov: np.ndarray | None = None,
    initial_bias: Sequence[float] = (0.0, 0.0, 0.0),
    noise_scale: float = 1.0,
) -> MeasurementLog:
    """Draw accelerometer, bias-walk, prior and vision noise for one run.

    Vision draws are unit normals; with isotropic weight ``w`` a feature's
    residual noise is ``draw / sqrt(w)``.  ``pixel_sigma / focal`` is the
    angular error at unit range and is kept for deriving weights.
    ``noise_scale`` multiplies every draw (0 gives a noiseless log with the
    same random stream).
    """
    rng = np.random.default_rng(seed)
    H, m = trajectory.horizon, trajectory.ticks_per_keyframe
    noise = rng.standard_normal((H, m, 3)) * imu.accel_sigma * noise_scale
    bias_step = rng.standard_normal((H, 3)) * imu.bias_noise_density * math.sqrt(m * imu.delta) * noise_scale
    biases = np.empty((H + 1, 3))
    biases[0] = initial_bias
    for k in range(H):
        biases[k + 1] = biases[k] - bias_step[k]

    g = imu.gravity_vector
    R = trajectory.imu_subsample_rotations
    a = trajectory.imu_accelerations
    # body reading = R^T (a - g) + b + eta
    accel = np.einsum("hmji,hmj->hmi", R, a - g) + biases[:H, None, :] + noise

    x0 = np.concatenate([trajectory.positions[0], trajectory.velocities[0], biases[0]])
    if prior_cov is None:
        prior_meas = x0.copy()
        rng.standard_normal(9)  # keep the stream layout independent of prior_cov
    else:
        L = np.linalg.cholesky(np.asarray(prior_cov, dtype=float))
        prior_meas = x0 + noise_scale * (L @ rng.standard_normal(9))

    sigma_v = pixel_sigma / camera.focal
    vnoise = rng.standard_normal((len(landmarks), H + 1, 3)) * noise_scale
    return MeasurementLog(
        accel=accel,
        accel_noise=noise,
        biases=biases,
        prior_measurement=prior_meas,
        vision_noise=vnoise,
        landmark_ids=tuple(lm.id for lm in landmarks),
        vision_sigma=sigma_v,
    )
