"""Submodularity diagnostics, guarantee audits, the linear estimator and the Monte Carlo harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
import scipy.linalg

from vinselect.imu_model import HorizonState, ImuBlock, imu_measurement
from vinselect.metrics import MetricKind, objective
from vinselect.selection import BRUTE_FORCE_LIMIT, CombinatorialLimitError, Selection, subset_values
from vinselect.sim_world import ImuParams, MeasurementLog, Trajectory
from vinselect.vision_model import FeatureDelta, FeatureMatrices, landmark_projector, vision_measurement

MAX_RATIO_SET = 8
MAX_RATIO_GROUND = 20


class EstimationError(ArithmeticError):
    """The normal equations are singular or indefinite."""


# ---------------------------------------------------------------------------
# submodularity ratio


@dataclass(frozen=True)
class RatioReport:
    gamma: float
    argmin_witness: tuple[tuple[int, ...], tuple[int, ...]]
    n_pairs_checked: int
    n_pairs_skipped: int = 0


def _ratio_pairs(N: int, s_mask: int, kappa: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Subsets L of S and, for each, the nonempty E (|E| <= kappa) disjoint from L."""
    s_bits = [i for i in range(N) if s_mask >> i & 1]
    Ls = np.array([sum(1 << s_bits[i] for i in range(len(s_bits)) if r >> i & 1) for r in range(1 << len(s_bits))], dtype=np.int64)
    all_masks = np.arange(1, 1 << N, dtype=np.int64)
    pop = np.bitwise_count(all_masks)
    small = all_masks[pop <= kappa]
    return Ls, [small[(small & L) == 0] for L in Ls]


def _count_pairs(N: int, s_size: int, kappa: int) -> int:
    total = 0
    for l in range(s_size + 1):
        n_l = math.comb(s_size, l)
        total += n_l * sum(math.comb(N - l, j) for j in range(1, min(kappa, N - l) + 1))
    return total


def submodularity_ratio(
    omega_bar,
    deltas: Sequence[FeatureDelta],
    S: Sequence[int],
    kappa: int,
    kind: MetricKind,
    limit: int = BRUTE_FORCE_LIMIT,
    denominator_tol: float = 1e-9,
) -> RatioReport:
    """Exact submodularity ratio of ``kind`` with respect to ``S`` by enumeration.

    The ratio is minimized over ``L`` subset of ``S`` and ``E`` disjoint from
    ``L`` with ``1 <= |E| <= kappa`` of
    ``sum_e [f(L+e) - f(L)] / [f(L+E) - f(L)]``.  Pairs whose denominator is
    at most ``denominator_tol * max(1, |f(L)|)`` are skipped.
    """
    kind = MetricKind(kind)
    S = sorted(set(int(s) for s in S))
    N = len(deltas)
    if len(S) > MAX_RATIO_SET:
        raise CombinatorialLimitError(1 << len(S), 1 << MAX_RATIO_SET)
    if N > MAX_RATIO_GROUND:
        raise CombinatorialLimitError(1 << N, 1 << MAX_RATIO_GROUND)
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    n_pairs = _count_pairs(N, len(S), kappa)
    if n_pairs > limit:
        raise CombinatorialLimitError(n_pairs, limit)

    s_mask = sum(1 << s for s in S)
    Ls, Es = _ratio_pairs(N, s_mask, kappa)
    singles = (1 << np.arange(N, dtype=np.int64))
    needed = np.unique(np.concatenate([Ls] + [L | singles for L in Ls] + [L | E for L, E in zip(Ls, Es)]))
    masks = ((needed[:, None] >> np.arange(N)) & 1).astype(bool)
    vals = subset_values(kind, omega_bar, deltas, masks)

    def f(m):
        return vals[np.searchsorted(needed, m)]

    gamma, witness, skipped, checked = np.inf, ((), ()), 0, 0
    for L, E in zip(Ls, Es):
        if len(E) == 0:
            continue
        fL = float(f(L))
        g1 = f(L | singles) - fL  # gains of single additions (entries inside L are unused)
        bits = ((E[:, None] >> np.arange(N)) & 1).astype(float)
        num = bits @ g1
        den = f(L | E) - fL
        ok = den > denominator_tol * max(1.0, abs(fL))
        skipped += int(np.count_nonzero(~ok))
        checked += int(np.count_nonzero(ok))
        if not np.any(ok):
            continue
        r = np.where(ok, num / np.where(ok, den, 1.0), np.inf)
        i = int(np.argmin(r))
        if r[i] < gamma:
            gamma = float(r[i])
            witness = (_bits(int(L), N), _bits(int(E[i]), N))
    if not np.isfinite(gamma):
        gamma = 1.0  # every denominator vanished: no evidence against submodularity
    return RatioReport(gamma=gamma, argmin_witness=witness, n_pairs_checked=checked, n_pairs_skipped=skipped)


def _bits(mask: int, N: int) -> tuple[int, ...]:
    return tuple(i for i in range(N) if mask >> i & 1)


def ratio_of_pair(omega_bar, deltas, kind: MetricKind, L: Sequence[int], E: Sequence[int]) -> float:
    """Re-evaluate a single ratio term, e.g. to check a witness."""
    L = tuple(L)
    fL = objective(kind, omega_bar, deltas, L)
    num = sum(objective(kind, omega_bar, deltas, L + (e,)) - fL for e in E)
    return num / (objective(kind, omega_bar, deltas, L + tuple(E)) - fL)


@dataclass(frozen=True)
class EigvecCondition:
    holds: bool
    min_spread: float  # smallest (over L) largest position-subvector difference
    min_gap: float = float("inf")  # smallest (over L) relative gap above the min eigenvalue


def eigvec_condition(omega_bar, deltas: Sequence[FeatureDelta], S: Sequence[int], tol: float = 1e-6, gap_rtol: float = 1e-6) -> EigvecCondition:
    """Check that the weakest eigenvector's position parts differ across frames.

    For every ``L`` subset of ``S`` the minimum eigenvector of the accumulated
    information is split into per-frame position sub-vectors; the condition
    holds when, for every ``L``, some pair of sub-vectors differs by more
    than ``tol`` and the smallest eigenvalue is simple (relative gap above
    ``gap_rtol``).  A repeated smallest eigenvalue has no unique weakest
    direction: a single bearing block has rank two, so one landmark can leave
    part of the eigenspace untouched and its min-eigenvalue gain vanishes even
    though the sub-vectors differ.
    """
    S = list(S)
    spread, gap = np.inf, np.inf
    base = np.array(omega_bar, dtype=float)
    for r in range(len(S) + 1):
        for L in combinations(S, r):
            M = base + sum((deltas[i].weighted for i in L), np.zeros_like(base))
            w, V = scipy.linalg.eigh(M, subset_by_index=[0, 1])
            v = V[:, 0].reshape(-1, 9)[:, :3]
            d = np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=2))
            spread = min(spread, float(d))
            gap = min(gap, float((w[1] - w[0]) / max(1.0, abs(w[0]))))
    return EigvecCondition(bool(spread > tol and gap > gap_rtol), spread, gap)


# ---------------------------------------------------------------------------
# guarantees


@dataclass(frozen=True)
class AuditReport:
    passed: bool
    bound: float
    value: float
    optimum: float
    slack: float
    rule: str


def guarantee_audit(selection: Selection, brute: Selection, ratio: RatioReport | None, kind: MetricKind, tol: float = 1e-9) -> AuditReport:
    """Check the greedy value against the applicable a-priori bound.

    log det: ``f(S) >= (1 - 1/e) f(S*) + f(empty)/e``; min eigenvalue:
    ``f(S) >= (1 - exp(-gamma)) f(S*)`` with the measured ratio.
    """
    kind = MetricKind(kind)
    opt = brute.objective_value
    if kind is MetricKind.LOG_DET:
        base = selection.base_value if not math.isnan(selection.base_value) else brute.base_value
        bound = (1.0 - 1.0 / math.e) * opt + base / math.e
        rule = "logdet-nemhauser"
    else:
        if ratio is None:
            raise ValueError("min-eigenvalue audit needs a submodularity ratio")
        bound = (1.0 - math.exp(-ratio.gamma)) * opt
        rule = "mineig-ratio"
    slack = selection.objective_value - bound
    passed = slack >= -tol * max(1.0, abs(opt))
    return AuditReport(passed, bound, selection.objective_value, opt, slack, rule)


# ---------------------------------------------------------------------------
# estimation


@dataclass(frozen=True)
class EstimationErrors:
    abs_translation: np.ndarray  # (H+1,)
    rel_translation: np.ndarray  # (H,)
    # attitudes are known in the linear model; kept for table parity
    abs_rotation: np.ndarray
    rel_rotation: np.ndarray

    @property
    def mean_abs_translation(self) -> float:
        return float(np.mean(self.abs_translation))

    @property
    def mean_rel_translation(self) -> float:
        return float(np.mean(self.rel_translation))


def translation_errors(estimate: HorizonState, truth: HorizonState) -> EstimationErrors:
    d = estimate.positions - truth.positions
    abs_t = np.linalg.norm(d, axis=1)
    rel_t = np.linalg.norm(np.diff(d, axis=0), axis=1)
    return EstimationErrors(abs_t, rel_t, np.zeros_like(abs_t), np.zeros_like(rel_t))


def ground_truth(trajectory: Trajectory, log: MeasurementLog) -> HorizonState:
    return HorizonState(trajectory.positions.copy(), trajectory.velocities.copy(), log.biases.copy())


def estimate_state(
    omega_bar,
    imu_blocks: Sequence[ImuBlock],
    feature_matrices: Sequence[FeatureMatrices],
    measurement_log: MeasurementLog,
    ground_truth: HorizonState,
    *,
    trajectory: Trajectory,
    imu: ImuParams,
    prior_info: np.ndarray,
    camera,
    weights: Sequence[float] | None = None,
    return_information: bool = False,
):
    """Linear least-squares estimate of the horizon state from one noise realization.

    Solves ``(Omega_bar + sum_l w_l F_l^T Q_l F_l) x = b`` where ``b`` collects
    the prior at frame 0, the IMU pseudo-measurements and the projected
    vision residuals ``w_l F_l^T Q_l z_l``.  Each feature's residual noise is
    the logged unit draw scaled by ``1/sqrt(w_l)``.
    """
    Lam = np.array(omega_bar, dtype=float, copy=True)
    n = Lam.shape[0]
    b = np.zeros(n)
    b[:9] += prior_info @ measurement_log.prior_measurement
    for blk in imu_blocks:
        k = blk.frame_pair[0]
        z = imu_measurement(trajectory, k, imu, measurement_log.accel[k])
        b += blk.coeff_matrix.T @ (blk.noise_info @ z)
    weights = [1.0] * len(feature_matrices) if weights is None else list(weights)
    for fm, w in zip(feature_matrices, weights):
        noise = measurement_log.vision_noise_for(fm.landmark_id, fm.visible_frames, sigma=1.0 / math.sqrt(w))
        z = vision_measurement(fm, camera, noise)
        Q = landmark_projector(fm.E)
        QF = Q @ fm.F
        Lam += w * (fm.F.T @ QF)
        b += w * (QF.T @ z)
    Lam = 0.5 * (Lam + Lam.T)
    try:
        c = scipy.linalg.cho_factor(Lam, lower=True)
    except np.linalg.LinAlgError as exc:
        raise EstimationError("information matrix is not positive definite") from exc
    x = scipy.linalg.cho_solve(c, b)
    if not np.all(np.isfinite(x)):
        raise EstimationError("non-finite estimate")
    est = HorizonState.from_vector(x)
    errs = translation_errors(est, ground_truth)
    if return_information:
        return est, errs, Lam
    return est, errs


def nees(estimate: HorizonState, truth: HorizonState, information: np.ndarray) -> float:
    """Normalized estimation error squared ``e^T Omega e`` over the full state."""
    e = estimate.as_vector() - truth.as_vector()
    return float(e @ information @ e)


def nees_band(dim: int, n_samples: int, confidence: float = 0.99) -> tuple[float, float]:
    """Two-sided chi-square band for the average of ``n_samples`` NEES values."""
    from scipy.stats import chi2

    a = (1.0 - confidence) / 2.0
    dof = dim * n_samples
    return float(chi2.ppf(a, dof) / n_samples), float(chi2.ppf(1.0 - a, dof) / n_samples)


# ---------------------------------------------------------------------------
# Monte Carlo harness (the config layer lives in vinselect.config)

from vinselect.experiment import MonteCarloResult, monte_carlo, run_single  # noqa: E402,F401
