"""Shared builders: a circular-window selection problem and an estimator window with simulated logs."""

import numpy as np

from vinselect.imu_model import accumulate_prior_info, build_imu_blocks, prior_information
from vinselect.scenario import build_problem, sample_candidates
from vinselect.sim_world import CameraModel, ImuParams, make_circular_trajectory, simulate_measurement_noise
from vinselect.vision_model import candidate_features

PRIOR_COV = (1e-2, 1e-2, 1e-4)
CIRCLE_BOX = ((3.0, -8.0, -3.0), (25.0, 12.0, 4.0))


def circle_trajectory():
    return make_circular_trajectory(10.0, 0.2, 0.3, 0.2, 2.5, 0.5, 0.01)


def circle_instance(n_features, seed):
    """Selection problem on a turning, climbing window (simple smallest eigenvalue)."""
    traj, cam = circle_trajectory(), CameraModel(keyframe_dt=0.5)
    lms = sample_candidates(traj, cam, n_features, CIRCLE_BOX, np.random.default_rng(seed))
    return build_problem(traj, ImuParams(), cam, lms)


class Window:
    def __init__(self, n_landmarks=12, seed=0, weight=50.0, extrinsic=(0.0, 0.0, 0.0)):
        self.imu = ImuParams()
        self.camera = CameraModel(keyframe_dt=0.5, extrinsic_translation=np.array(extrinsic))
        self.traj = circle_trajectory()
        rng = np.random.default_rng(seed)
        lms = sample_candidates(self.traj, self.camera, n_landmarks, CIRCLE_BOX, rng)
        self.prior = prior_information(*PRIOR_COV)
        self.blocks = build_imu_blocks(self.traj, self.imu)
        self.omega_bar = accumulate_prior_info(self.blocks, self.prior, self.traj.horizon).data
        self.landmarks, self.fms, self.deltas = candidate_features(self.traj, self.camera, lms, weight=weight)

    def log(self, seed, noise_scale=1.0, bias=(0.0, 0.0, 0.0)):
        return simulate_measurement_noise(
            self.traj,
            self.landmarks,
            self.imu,
            self.camera,
            1.0,
            seed,
            prior_cov=np.linalg.inv(self.prior),
            initial_bias=bias,
            noise_scale=noise_scale,
        )

    def estimate(self, log, subset=None, return_information=False):
        from vinselect.analysis import estimate_state, ground_truth

        subset = range(len(self.fms)) if subset is None else subset
        return estimate_state(
            self.omega_bar,
            self.blocks,
            [self.fms[i] for i in subset],
            log,
            ground_truth(self.traj, log),
            trajectory=self.traj,
            imu=self.imu,
            prior_info=self.prior,
            camera=self.camera,
            weights=[self.deltas[i].weight for i in subset],
            return_information=return_information,
        )
