"""Feature selectors: lazy/naive greedy, random, quality and exhaustive search.

Feature ids are positions in the candidate list handed to the selector.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from vinselect.metrics import MetricKind, evaluate, logdet, min_eigpair, objective, ritz_mineig_bounds
from vinselect.vision_model import FeatureDelta

BRUTE_FORCE_LIMIT = 10**6

# Slack on the lazy break test so that rounding in a bound never prunes the argmax.
BOUND_SLACK = 1e-10


class ParameterError(ValueError):
    pass


class CombinatorialLimitError(RuntimeError):
    def __init__(self, count: int, limit: int = BRUTE_FORCE_LIMIT):
        super().__init__(f"{count} subsets exceed the enumeration limit of {limit}")
        self.count = count


@dataclass(frozen=True)
class Selection:
    chosen: tuple[int, ...]
    objective_value: float
    marginal_gains: tuple[float, ...]
    n_objective_evals: int
    method: str
    base_value: float = float("nan")
    short_budget: bool = False
    kind: MetricKind | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(set(self.chosen)) != len(self.chosen):
            raise ValueError("duplicate ids in selection")


def stack_weighted(deltas: Sequence[FeatureDelta]) -> np.ndarray:
    return np.stack([d.weighted for d in deltas]) if len(deltas) else np.zeros((0, 0, 0))


# Lazy bounds for the min eigenvalue: "ritz" restricts to the lowest
# eigenvectors of the current matrix, "ipsen" is lambda_min + ||D v_min||.
MINEIG_BOUNDS = ("ritz", "ipsen")
RITZ_DIM = 3


def _upper_bounds(kind: MetricKind, omega_s: np.ndarray, P: np.ndarray, cands: np.ndarray, mineig_bound: str = "ritz") -> np.ndarray:
    if kind is MetricKind.LOG_DET:
        # Hadamard on omega_s + P_l using diagonals only
        diag = np.diagonal(omega_s)[None, :] + np.diagonal(P[cands], axis1=1, axis2=2)
        return np.sum(np.log(diag), axis=1)
    if mineig_bound == "ritz":
        return ritz_mineig_bounds(omega_s, P[cands], RITZ_DIM)
    eig = min_eigpair(omega_s)
    return eig.lambda_min + np.linalg.norm(P[cands] @ eig.v_min, axis=1)


def greedy_select(
    omega_bar,
    deltas: Sequence[FeatureDelta],
    kind: MetricKind,
    kappa: int,
    lazy: bool = True,
    stale_gains: bool = False,
    mineig_bound: str = "ritz",
) -> Selection:
    """Greedy maximization of ``kind`` with the bound-sorted early break.

    Every outer iteration recomputes an upper bound on ``f(S + {l})`` for each
    remaining candidate, scans candidates by decreasing bound and stops once a
    bound falls below the best value found so far.  With ``lazy=False`` every
    candidate is evaluated.  ``stale_gains`` switches (log det only) to the
    classic priority-queue variant that reuses marginal gains from earlier
    iterations as bounds, which is sound because log det is submodular.
    ``mineig_bound`` picks the min-eigenvalue bound (see ``MINEIG_BOUNDS``).
    """
    kind = MetricKind(kind)
    if kappa < 0:
        raise ParameterError("kappa must be nonnegative")
    if mineig_bound not in MINEIG_BOUNDS:
        raise ParameterError(f"unknown mineig_bound {mineig_bound!r}")
    N = len(deltas)
    if kappa > 0 and N == 0:
        raise ParameterError("no candidates to select from")
    omega = np.array(omega_bar, dtype=float, copy=True)
    base = evaluate(kind, omega)
    budget = min(kappa, N)
    if stale_gains:
        if kind is not MetricKind.LOG_DET:
            raise ParameterError("stale-gain lazy evaluation is only sound for log det")
        return _stale_gain_greedy(omega, deltas, budget, base, short=kappa > N)

    P = stack_weighted(deltas)
    remaining = list(range(N))
    chosen: list[int] = []
    gains: list[float] = []
    f_cur = base
    n_evals = 0
    for _ in range(budget):
        cands = np.array(remaining)
        if lazy:
            U = _upper_bounds(kind, omega, P, cands, mineig_bound)
            order = sorted(range(len(cands)), key=lambda i: (-U[i], cands[i]))
        else:
            U = None
            order = range(len(cands))
        f_max, l_max = -np.inf, -1
        for i in order:
            l = int(cands[i])
            if U is not None and U[i] + BOUND_SLACK * max(1.0, abs(f_max)) < f_max:
                break
            f = evaluate(kind, omega + P[l])
            n_evals += 1
            if f > f_max or (f == f_max and l < l_max):
                f_max, l_max = f, l
        chosen.append(l_max)
        remaining.remove(l_max)
        omega += P[l_max]
        gains.append(f_max - f_cur)
        f_cur = f_max
    method = f"greedy-{kind.value}" + ("" if lazy else "-naive")
    return Selection(tuple(chosen), f_cur, tuple(gains), n_evals, method, base, kappa > N, kind)


def _stale_gain_greedy(omega, deltas, budget, base, short) -> Selection:
    import heapq

    P = stack_weighted(deltas)
    f_cur = base
    # (-gain bound, id, iteration at which the gain was computed)
    heap = [(-np.inf, l, -1) for l in range(len(deltas))]
    heapq.heapify(heap)
    chosen, gains, n_evals = [], [], 0
    for it in range(budget):
        while True:
            neg, l, stamp = heapq.heappop(heap)
            if stamp == it:
                break
            g = logdet(omega + P[l]) - f_cur
            n_evals += 1
            heapq.heappush(heap, (-g, l, it))
        gain = -neg
        chosen.append(l)
        omega = omega + P[l]
        f_cur += gain
        gains.append(gain)
    f_final = logdet(omega)
    return Selection(tuple(chosen), f_final, tuple(gains), n_evals, "greedy-logdet-stale", base, short, MetricKind.LOG_DET)


def _finish(kind, omega_bar, deltas, chosen, method, n_evals=0, short=False) -> Selection:
    """Objective bookkeeping for selectors that do not optimize it themselves."""
    base = objective(kind, omega_bar, deltas, ())
    vals, gains = base, []
    M = np.array(omega_bar, dtype=float, copy=True)
    for l in chosen:
        M += deltas[l].weighted
        v = evaluate(kind, M)
        gains.append(v - vals)
        vals = v
    return Selection(tuple(chosen), vals, tuple(gains), n_evals, method, base, short, MetricKind(kind))


def random_select(n_features: int, kappa: int, seed: int, omega_bar=None, deltas=None, kind: MetricKind = MetricKind.LOG_DET) -> Selection:
    """Uniform subset of size kappa without replacement."""
    if kappa > n_features:
        raise ParameterError(f"kappa={kappa} exceeds n_features={n_features}")
    rng = np.random.default_rng(seed)
    chosen = tuple(int(i) for i in rng.choice(n_features, size=kappa, replace=False))
    if omega_bar is None:
        return Selection(chosen, float("nan"), (), 0, "random")
    return _finish(kind, omega_bar, deltas, chosen, "random")


def quality_select(scores: Sequence[float], kappa: int, omega_bar=None, deltas=None, kind: MetricKind = MetricKind.LOG_DET) -> Selection:
    """Top-kappa appearance scores; ties go to the lower id."""
    if kappa > len(scores):
        raise ParameterError(f"kappa={kappa} exceeds {len(scores)} features")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    chosen = tuple(order[:kappa])
    if omega_bar is None:
        return Selection(chosen, float("nan"), (), 0, "quality")
    return _finish(kind, omega_bar, deltas, chosen, "quality")


def _batched_values(kind: MetricKind, mats: np.ndarray) -> np.ndarray:
    if kind is MetricKind.MIN_EIG:
        return np.linalg.eigvalsh(mats)[:, 0]
    L = np.linalg.cholesky(mats)
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=1, axis2=2)), axis=1)


def subset_values(kind: MetricKind, omega_bar, deltas: Sequence[FeatureDelta], masks: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Objective for many subsets given as boolean rows of ``masks`` (batched LAPACK)."""
    kind = MetricKind(kind)
    omega = np.asarray(omega_bar, dtype=float)
    n = omega.shape[0]
    P = stack_weighted(deltas).reshape(len(deltas), n * n)
    out = np.empty(len(masks))
    for s in range(0, len(masks), chunk):
        m = masks[s : s + chunk].astype(float)
        mats = omega[None] + (m @ P).reshape(len(m), n, n)
        out[s : s + chunk] = _batched_values(kind, mats)
    return out


def brute_force_select(omega_bar, deltas: Sequence[FeatureDelta], kind: MetricKind, kappa: int, limit: int = BRUTE_FORCE_LIMIT) -> Selection:
    """Exhaustive search over subsets of size min(kappa, N).

    Objectives are monotone, so full-budget subsets suffice.  Ties go to the
    lexicographically smallest id set.
    """
    kind = MetricKind(kind)
    N = len(deltas)
    k = min(kappa, N)
    count = math.comb(N, k)
    if count > limit:
        raise CombinatorialLimitError(count, limit)
    combos = list(itertools.combinations(range(N), k))
    masks = np.zeros((count, N), dtype=bool)
    for r, c in enumerate(combos):
        masks[r, list(c)] = True
    vals = subset_values(kind, omega_bar, deltas, masks)
    best = int(np.argmax(vals))  # first maximum in lexicographic order
    sel = _finish(kind, omega_bar, deltas, combos[best], "brute", n_evals=count, short=kappa > N)
    return sel
