"""Linear accelerometer model between keyframes and the no-vision information matrix.

Each keyframe state is ``[position, velocity, accel_bias]`` (9 entries) and
the horizon state stacks ``H+1`` of them frame-major.  With attitudes known,
the accelerometer samples between two keyframes collapse into one linear
pseudo-measurement ``z = A x + eta`` whose coefficients only touch the two
frames involved.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from vinselect.sim_world import ImuParams, Trajectory

POS, VEL, BIAS = slice(0, 3), slice(3, 6), slice(6, 9)


class ModelError(RuntimeError):
    """The requested linear model is ill-posed (e.g. zero noise everywhere)."""


def frame_slice(frame: int) -> slice:
    return slice(9 * frame, 9 * frame + 9)


def position_index(frame: int) -> slice:
    return slice(9 * frame, 9 * frame + 3)


@dataclass(frozen=True)
class HorizonState:
    positions: np.ndarray  # (H+1, 3)
    velocities: np.ndarray
    biases: np.ndarray

    @property
    def n_frames(self) -> int:
        return len(self.positions)

    def as_vector(self) -> np.ndarray:
        return np.hstack([self.positions, self.velocities, self.biases]).reshape(-1)

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "HorizonState":
        blocks = np.asarray(x, dtype=float).reshape(-1, 9)
        return cls(blocks[:, POS].copy(), blocks[:, VEL].copy(), blocks[:, BIAS].copy())


@dataclass(frozen=True)
class InfoMatrix:
    """Dense symmetric information matrix over the stacked horizon state."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", 0.5 * (d + d.T))

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def min_eig(self) -> float:
        return float(scipy.linalg.eigh(self.data, eigvals_only=True, subset_by_index=[0, 0])[0])

    @property
    def is_pd(self) -> bool:
        try:
            np.linalg.cholesky(self.data)
        except np.linalg.LinAlgError:
            return False
        return True

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"c{j}" for j in range(self.dim)])
        for row in self.data:
            writer.writerow([format(float(v), ".17g") for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "InfoMatrix":
        rows = list(csv.reader(io.StringIO(text)))[1:]
        return cls(np.array([[float(v) for v in r] for r in rows]))


@dataclass(frozen=True)
class ImuBlock:
    coeff_matrix: np.ndarray  # (9, 9(H+1))
    noise_cov: np.ndarray  # (9, 9)
    noise_info: np.ndarray  # (9, 9)
    frame_pair: tuple[int, int]
    ccT: np.ndarray  # (6, 6) noise coefficient Gram matrix, unscaled


def integration_coefficients(rotations: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Bias coefficient matrices (N, M) for one keyframe interval.

    ``rotations`` are the ``m`` per-tick attitudes; tick ``i`` weighs its
    sample by ``(m - i - 1/2) delta^2`` in position and ``delta`` in velocity.
    """
    m = len(rotations)
    w = (m - np.arange(m) - 0.5) * delta**2
    N = np.einsum("i,ijk->jk", w, rotations)
    M = rotations.sum(axis=0) * delta
    return N, M


def noise_coefficients(rotations: np.ndarray, delta: float) -> np.ndarray:
    """Stack the 6 x 3m matrix mapping per-tick accel noise to (eta_p, eta_v)."""
    m = len(rotations)
    w = (m - np.arange(m) - 0.5) * delta**2
    top = np.concatenate([w[i] * rotations[i] for i in range(m)], axis=1)
    bottom = np.concatenate([delta * rotations[i] for i in range(m)], axis=1)
    return np.vstack([top, bottom])


def _invert_cov(cov: np.ndarray) -> np.ndarray:
    n = cov.shape[0]
    try:
        c = scipy.linalg.cho_factor(cov, lower=True)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(cov) / n
        if not jitter > 0:
            raise ModelError(
                "IMU noise covariance is singular (all noise densities zero); "
                "use positive densities for the model or regularize the covariance"
            ) from None
        try:
            c = scipy.linalg.cho_factor(cov + jitter * np.eye(n), lower=True)
        except np.linalg.LinAlgError as exc:
            raise ModelError("IMU noise covariance is singular; regularize it") from exc
    info = scipy.linalg.cho_solve(c, np.eye(n))
    return 0.5 * (info + info.T)


def build_imu_block(
    trajectory: Trajectory,
    k: int,
    j: int,
    imu: ImuParams,
    bias_walk_cov: np.ndarray | None = None,
) -> ImuBlock:
    """Linear measurement ``z_kj = A_kj x + eta_kj`` for consecutive keyframes."""
    if j != k + 1 or not 0 <= k < trajectory.horizon:
        raise ValueError(f"frame pair ({k}, {j}) must be consecutive inside the horizon")
    rots = trajectory.imu_subsample_rotations[k]
    m = len(rots)
    delta = imu.delta
    N, M = integration_coefficients(rots, delta)
    dkj = m * delta

    eye = np.eye(3)
    A = np.zeros((9, trajectory.state_dim))
    ak = A[:, frame_slice(k)]
    ak[POS, POS] = -eye
    ak[POS, VEL] = -dkj * eye
    ak[POS, BIAS] = N
    ak[VEL, VEL] = -eye
    ak[VEL, BIAS] = M
    ak[BIAS, BIAS] = -eye
    A[:, frame_slice(j)] = np.eye(9)

    C = noise_coefficients(rots, delta)
    ccT = C @ C.T
    if bias_walk_cov is None:
        bias_walk_cov = imu.bias_walk_cov(dkj)
    cov = scipy.linalg.block_diag(imu.accel_sigma**2 * ccT, np.asarray(bias_walk_cov, dtype=float))
    return ImuBlock(coeff_matrix=A, noise_cov=cov, noise_info=_invert_cov(cov), frame_pair=(k, j), ccT=ccT)


def build_imu_blocks(trajectory: Trajectory, imu: ImuParams) -> list[ImuBlock]:
    return [build_imu_block(trajectory, k, k + 1, imu) for k in range(trajectory.horizon)]


def prior_information(position_cov: float, velocity_cov: float, bias_cov: float) -> np.ndarray:
    return np.diag(np.repeat([1.0 / position_cov, 1.0 / velocity_cov, 1.0 / bias_cov], 3))


def accumulate_prior_info(blocks: Sequence[ImuBlock], prior_k: np.ndarray, H: int) -> InfoMatrix:
    """Sum of ``A^T Omega A`` over the IMU blocks plus the prior on frame 0."""
    dim = 9 * (H + 1)
    prior_k = np.asarray(prior_k, dtype=float)
    if prior_k.shape != (9, 9):
        raise ValueError(f"prior must be 9x9, got {prior_k.shape}")
    omega = np.zeros((dim, dim))
    omega[:9, :9] += prior_k
    for blk in blocks:
        if blk.coeff_matrix.shape[1] != dim:
            raise ValueError(f"IMU block {blk.frame_pair} has {blk.coeff_matrix.shape[1]} columns, expected {dim}")
        k, j = blk.frame_pair
        # only the two touched frames contribute
        cols = np.r_[frame_slice(k), frame_slice(j)]
        Ak = blk.coeff_matrix[:, cols]
        omega[np.ix_(cols, cols)] += Ak.T @ blk.noise_info @ Ak
    return InfoMatrix(omega)


def imu_measurement(trajectory: Trajectory, k: int, imu: ImuParams, accel: np.ndarray) -> np.ndarray:
    """Pseudo-measurement ``[z_p, z_v, z_b]`` from body-frame readings of interval ``k``."""
    rots = trajectory.imu_subsample_rotations[k]
    m = len(rots)
    delta = imu.delta
    g = imu.gravity_vector
    w = (m - np.arange(m) - 0.5) * delta**2
    world = np.einsum("ijk,ik->ij", rots, accel)
    z_p = w.sum() * g + w @ world
    z_v = m * delta * g + delta * world.sum(axis=0)
    return np.concatenate([z_p, z_v, np.zeros(3)])
