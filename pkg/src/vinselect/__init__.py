"""Anticipation-aware visual feature selection for visual-inertial navigation.

The package forward-simulates the information matrix of the robot state over a
short future horizon (linear IMU and bearing models), scores candidate
landmarks with min-eigenvalue or log-determinant objectives and picks subsets
with a lazy greedy algorithm.  A Frank-Wolfe convex relaxation and a brute
force enumerator serve as optimality references, and a linear estimator turns
selections into estimation errors for Monte Carlo studies.
"""

from vinselect.sim_world import (
    CameraModel,
    ImuParams,
    Landmark,
    MeasurementLog,
    Trajectory,
    make_circular_trajectory,
    make_straight_trajectory,
    sample_landmarks,
    score_to_track_prob,
    simulate_measurement_noise,
)
from vinselect.imu_model import (
    ImuBlock,
    InfoMatrix,
    accumulate_prior_info,
    build_imu_block,
)
from vinselect.vision_model import (
    FeatureDelta,
    FeatureMatrices,
    build_feature_matrices,
    feature_delta,
    predict_bearing,
    triangulability,
)
from vinselect.metrics import MetricKind, objective
from vinselect.selection import (
    Selection,
    brute_force_select,
    greedy_select,
    quality_select,
    random_select,
)
from vinselect.relaxation import RelaxationResult, round_topk, solve_relaxation

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "FeatureDelta",
    "FeatureMatrices",
    "ImuBlock",
    "ImuParams",
    "InfoMatrix",
    "Landmark",
    "MeasurementLog",
    "MetricKind",
    "RelaxationResult",
    "Selection",
    "Trajectory",
    "accumulate_prior_info",
    "brute_force_select",
    "build_feature_matrices",
    "build_imu_block",
    "feature_delta",
    "greedy_select",
    "make_circular_trajectory",
    "make_straight_trajectory",
    "objective",
    "predict_bearing",
    "quality_select",
    "random_select",
    "round_topk",
    "sample_landmarks",
    "score_to_track_prob",
    "simulate_measurement_noise",
    "solve_relaxation",
    "triangulability",
]
