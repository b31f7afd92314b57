"""Task-driven objectives over expected information matrices and their cheap bounds."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from vinselect.vision_model import FeatureDelta, FeatureMatrices, skew


class MetricKind(str, enum.Enum):
    MIN_EIG = "mineig"
    LOG_DET = "logdet"


class NumericalError(ArithmeticError):
    """An information matrix that should be PD is not."""


@dataclass(frozen=True)
class EigPair:
    lambda_min: float
    v_min: np.ndarray


def min_eig(M: np.ndarray) -> float:
    return float(scipy.linalg.eigh(M, eigvals_only=True, subset_by_index=[0, 0], check_finite=False)[0])


def min_eigpair(M: np.ndarray) -> EigPair:
    """Smallest eigenpair; on repeated eigenvalues the solver's first basis vector is kept."""
    w, V = scipy.linalg.eigh(M, subset_by_index=[0, 0], check_finite=False)
    return EigPair(float(w[0]), V[:, 0])


def logdet(M: np.ndarray) -> float:
    """log det via Cholesky, with one jittered retry before giving up."""
    try:
        L = scipy.linalg.cholesky(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        n = M.shape[0]
        jitter = 1e-10 * np.trace(M) / n
        try:
            L = scipy.linalg.cholesky(M + jitter * np.eye(n), lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError("information matrix is not positive definite") from exc
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def evaluate(kind: MetricKind, M: np.ndarray) -> float:
    return min_eig(M) if MetricKind(kind) is MetricKind.MIN_EIG else logdet(M)


def information_matrix(omega_bar, deltas: Sequence[FeatureDelta], subset: Iterable[int], weights=None) -> np.ndarray:
    """``omega_bar + sum_{l in subset} c_l Delta_l`` with ``c_l = p_l`` unless overridden."""
    M = np.array(omega_bar, dtype=float, copy=True)
    for i in subset:
        c = deltas[i].track_prob if weights is None else weights[i]
        if c:
            M += c * deltas[i].delta
    return M


def objective(kind: MetricKind, omega_bar, deltas: Sequence[FeatureDelta], subset: Iterable[int]) -> float:
    """Min eigenvalue or log det of the expected information after selecting ``subset``."""
    return evaluate(kind, information_matrix(omega_bar, deltas, subset))


def expected_objective_mc(
    kind: MetricKind,
    omega_bar,
    deltas: Sequence[FeatureDelta],
    subset: Iterable[int],
    n_samples: int,
    seed: int,
    return_stderr: bool = False,
):
    """Monte Carlo estimate of E_b[f(omega_bar + sum b_l Delta_l)], b_l ~ Bernoulli(p_l)."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    subset = list(subset)
    rng = np.random.default_rng(seed)
    probs = np.array([deltas[i].track_prob for i in subset])
    vals = np.empty(n_samples)
    cache: dict[bytes, float] = {}
    for s in range(n_samples):
        b = rng.random(len(subset)) < probs
        key = np.packbits(b).tobytes()
        if key not in cache:
            cache[key] = evaluate(kind, information_matrix(omega_bar, deltas, subset, weights=dict(zip(subset, b.astype(float)))))
        vals[s] = cache[key]
    mean = float(vals.mean())
    if return_stderr:
        se = float(vals.std(ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
        return mean, se
    return mean


def hadamard_logdet_bound(M: np.ndarray) -> float:
    """Sum of log diagonal entries, an upper bound on log det for PD ``M``."""
    d = np.diag(np.asarray(M, dtype=float))
    if np.any(d <= 0):
        raise ValueError("Hadamard bound needs a strictly positive diagonal")
    return float(np.sum(np.log(d)))


def weyl_bound(M: np.ndarray, delta: np.ndarray) -> float:
    """Max eigenvalue shift allowed by Weyl: the spectral norm of the perturbation."""
    return float(np.linalg.norm(delta, 2))


def ipsen_residual(eig: EigPair, delta: np.ndarray) -> float:
    return float(np.linalg.norm(delta @ eig.v_min))


def mineig_perturbation_bound(eig: EigPair, delta: FeatureDelta | np.ndarray, p: float | None = None) -> float:
    """``lambda_min(M) + ||p Delta v_min||``, an upper bound on lambda_min(M + p Delta)."""
    if isinstance(delta, FeatureDelta):
        D = delta.delta
        p = delta.track_prob if p is None else p
    else:
        D = np.asarray(delta, dtype=float)
        p = 1.0 if p is None else p
    return eig.lambda_min + float(np.linalg.norm(p * (D @ eig.v_min)))


def ritz_mineig_bounds(M: np.ndarray, deltas: np.ndarray, dim: int = 3) -> np.ndarray:
    """Upper bounds on ``lambda_min(M + D_l)`` for a stack of perturbations ``D_l``.

    Restricting the Rayleigh quotient of ``M + D_l`` to the span ``V`` of the
    ``dim`` lowest eigenvectors of ``M`` gives
    ``lambda_min(M + D_l) <= lambda_min(V^T (M + D_l) V)`` (Courant-Fischer).
    With ``dim=1`` this is ``lambda_min(M) + v^T D_l v``, never looser than
    :func:`mineig_perturbation_bound`.
    """
    M = np.asarray(M, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    dim = max(1, min(dim, M.shape[0]))
    w, V = scipy.linalg.eigh(M, subset_by_index=[0, dim - 1], check_finite=False)
    B = np.einsum("ia,lij,jb->lab", V, deltas, V)
    B[:, np.arange(dim), np.arange(dim)] += w
    return np.linalg.eigvalsh(B)[:, 0]


def geometric_gain_bounds(eig_base: EigPair, eig_updated: EigPair, fm: FeatureMatrices, delta: FeatureDelta) -> tuple[float, float]:
    """Sandwich on the min-eigenvalue gain of adding one landmark.

    lower: quadratic form of the added information along the updated matrix's
    weakest direction.  upper: squared norm of the bearing cross products
    applied to the base weakest direction, frame by frame.
    """
    mu_new = eig_updated.v_min
    lower = float(mu_new @ delta.delta @ mu_new)
    upper = 0.0
    for c, u, R_wc in zip(fm.visible_frames, fm.bearings, fm.cam_rotations):
        mu_c = eig_base.v_min[9 * c : 9 * c + 3]
        r = skew(u) @ R_wc.T @ mu_c
        upper += float(r @ r)
    return lower, delta.weight * upper
