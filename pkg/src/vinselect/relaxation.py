"""Box-and-budget convex relaxation solved by conditional gradient, with top-k rounding.

The relaxed problem is

    max_s f(omega_bar + sum_l s_l p_l Delta_l)   s.t.  0 <= s <= 1, sum(s) <= kappa

for the concave ``f`` in {log det, lambda_min}.  The linear oracle over the
polytope sets the kappa largest positive gradient entries to one.  Every
iterate yields a sound upper bound on the relaxed optimum:

* log det: ``f(s) + g^T (s_lmo - s)`` by concavity;
* lambda_min: for any density matrix ``W`` (trace one, PSD),
  ``lambda_min(Omega(s')) <= tr(W Omega(s'))``, which is linear in ``s'``, so
  its maximum over the polytope bounds the relaxation.  ``W`` spans the
  current near-minimal eigenspace.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from vinselect.metrics import MetricKind, logdet
from vinselect.selection import Selection, _finish, stack_weighted
from vinselect.vision_model import FeatureDelta

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MULTIPLICITY_RTOL = 1e-8


@dataclass(frozen=True)
class RelaxationResult:
    s: np.ndarray
    f_cvx: float
    rounded: Selection
    gap: float
    iterations: int
    converged: bool
    f_relaxed: float = float("nan")  # best iterate value (a lower bound on the relaxed optimum)
    trace: list = field(default_factory=list, compare=False)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "objective", "fw_gap", "upper_bound"])
        for it, f, g, u in self.trace:
            w.writerow([it, format(f, ".17g"), format(g, ".17g"), format(u, ".17g")])
        return buf.getvalue()


def lmo(grad: np.ndarray, kappa: int) -> np.ndarray:
    """Vertex of {0 <= s <= 1, sum(s) <= kappa} maximizing grad^T s."""
    v = np.zeros_like(grad)
    order = sorted(range(len(grad)), key=lambda i: (-grad[i], i))
    for i in order[:kappa]:
        if grad[i] > 0:
            v[i] = 1.0
    return v


def _omega(omega_bar: np.ndarray, P: np.ndarray, s: np.ndarray) -> np.ndarray:
    return omega_bar + np.tensordot(s, P, axes=1)


def _logdet_grad(M: np.ndarray, P: np.ndarray) -> np.ndarray:
    c = scipy.linalg.cho_factor(M, lower=True)
    Minv = scipy.linalg.cho_solve(c, np.eye(M.shape[0]))
    return np.einsum("ij,lij->l", Minv, P)


def _mineig_supergrad(M: np.ndarray, P: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """lambda_min, the density matrix over the near-minimal eigenspace, and tr(W P_l)."""
    w, V = scipy.linalg.eigh(M, subset_by_index=[0, min(5, M.shape[0] - 1)])
    tol = MULTIPLICITY_RTOL * max(abs(w[0]), 1e-300)
    Vs = V[:, w - w[0] <= tol]
    W = Vs @ Vs.T / Vs.shape[1]
    return float(w[0]), W, np.einsum("ij,lij->l", W, P)


def _golden_max(phi, lo=0.0, hi=1.0, tol=1e-10, max_iter=80) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = phi(c), phi(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = phi(d)
    # the endpoints matter when the optimum sits on the boundary
    cands = [(phi(1.0), 1.0), (fc, c), (fd, d)]
    return max(cands)[1]


def _safe_logdet(M: np.ndarray) -> float:
    try:
        return logdet(M)
    except ArithmeticError:
        return -np.inf


def solve_relaxation(
    omega_bar,
    deltas: Sequence[FeatureDelta],
    kind: MetricKind,
    kappa: int,
    max_iters: int = 500,
    tol: float = 1e-6,
) -> RelaxationResult:
    """Frank-Wolfe on the relaxation; ``f_cvx`` is the tightest sound upper bound seen."""
    kind = MetricKind(kind)
    omega_bar = np.array(omega_bar, dtype=float)
    N = len(deltas)
    P = stack_weighted(deltas)
    k = min(kappa, N)
    s = np.full(N, k / N if N else 0.0)
    best_f, best_s = -np.inf, s.copy()
    upper = np.inf
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        M = _omega(omega_bar, P, s)
        if kind is MetricKind.LOG_DET:
            f = logdet(M)
            g = _logdet_grad(M, P)
            v = lmo(g, k)
            fw_gap = float(g @ (v - s))
            u = f + fw_gap
        else:
            f, W, g = _mineig_supergrad(M, P)
            v = lmo(g, k)
            fw_gap = float(g @ (v - s))
            u = float(np.sum(W * M)) + fw_gap
        if f > best_f:
            best_f, best_s = f, s.copy()
        upper = min(upper, u)
        trace.append((it, f, fw_gap, upper))
        if upper - best_f <= tol * max(1.0, abs(best_f)):
            converged = True
            break
        d = v - s
        if kind is MetricKind.LOG_DET:
            D = np.tensordot(d, P, axes=1)
            gamma = _golden_max(lambda t: _safe_logdet(M + t * D))
        else:
            gamma = 2.0 / (it + 2.0)
        s = np.clip(s + gamma * d, 0.0, 1.0)
    rounded = round_topk(best_s, k, omega_bar=omega_bar, deltas=deltas, kind=kind)
    gap = upper - rounded.objective_value
    return RelaxationResult(
        s=best_s,
        f_cvx=float(upper),
        rounded=rounded,
        gap=float(gap),
        iterations=it,
        converged=converged,
        f_relaxed=float(best_f),
        trace=trace,
    )


def round_topk(s: np.ndarray, kappa: int, omega_bar=None, deltas=None, kind: MetricKind = MetricKind.LOG_DET) -> Selection:
    """The kappa largest entries of ``s``; ties go to the lower id."""
    order = sorted(range(len(s)), key=lambda i: (-s[i], i))
    chosen = tuple(order[: min(kappa, len(s))])
    if omega_bar is None:
        return Selection(chosen, float("nan"), (), 0, "rounded")
    return _finish(kind, omega_bar, deltas, chosen, "rounded", short=kappa > len(s))


def posterior_certificate(result: RelaxationResult) -> float:
    """Upper bound on f(S*) - f(S_rounded)."""
    return result.f_cvx - result.rounded.objective_value
