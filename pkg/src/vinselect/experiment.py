"""Monte Carlo experiments driven by an :class:`~vinselect.config.ExperimentConfig`.

Every run derives independent streams (world, window placement, noise,
random selector) from ``SeedSequence(master_seed, spawn_key=(run_id,))``, so
runs can execute in any order or process and still reduce to identical
results.  Within a window all selectors share one noise realization.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from vinselect.config import ExperimentConfig, parse_config
from vinselect.imu_model import InfoMatrix, ModelError, accumulate_prior_info, build_imu_blocks, prior_information
from vinselect.metrics import MetricKind, NumericalError, objective
from vinselect.relaxation import RelaxationResult, solve_relaxation
from vinselect.scenario import sample_candidates
from vinselect.selection import (
    Selection,
    brute_force_select,
    greedy_select,
    quality_select,
    random_select,
)
from vinselect.sim_world import (
    CameraModel,
    ImuParams,
    Landmark,
    Trajectory,
    make_circular_trajectory,
    make_straight_trajectory,
    sample_landmarks,
    score_to_track_prob,
    simulate_measurement_noise,
)
from vinselect.vision_model import candidate_features, range_weight

SUMMARY_COLUMNS = (
    "run_id",
    "selector",
    "kappa",
    "objective",
    "certificate_gap",
    "n_evals",
    "mean_rel_trans_err",
    "mean_abs_trans_err",
    "diverged",
)


@dataclass(frozen=True)
class WindowRecord:
    run_id: int
    window: int
    window_start: int
    n_landmarks: int
    n_candidates: int
    selector: str
    kappa: int
    objective: float
    objective_mineig: float
    objective_logdet: float
    certificate_gap: float
    n_evals: int
    n_used: int
    mean_rel_trans_err: float
    mean_abs_trans_err: float
    diverged: int


@dataclass(frozen=True)
class RunOutput:
    run_id: int
    records: list[WindowRecord]
    traces: list[tuple]  # (run_id, metric, iteration, objective, fw_gap, upper_bound)
    failures: list[str] = field(default_factory=list)


@dataclass
class MonteCarloResult:
    config: ExperimentConfig
    records: list[WindowRecord]
    traces: list[tuple]
    failures: list[str]

    def summary_rows(self) -> list[dict]:
        """One row per (run, selector), averaging over windows."""
        groups: dict[tuple[int, str], list[WindowRecord]] = {}
        for r in self.records:
            groups.setdefault((r.run_id, r.selector), []).append(r)
        out = []
        for (run_id, sel), rs in groups.items():
            ok = [r for r in rs if not r.diverged]
            out.append(
                {
                    "run_id": run_id,
                    "selector": sel,
                    "kappa": rs[0].kappa,
                    "objective": _mean([r.objective for r in rs]),
                    "certificate_gap": _mean([r.certificate_gap for r in rs]),
                    "n_evals": sum(r.n_evals for r in rs),
                    "mean_rel_trans_err": _mean([r.mean_rel_trans_err for r in ok]),
                    "mean_abs_trans_err": _mean([r.mean_abs_trans_err for r in ok]),
                    "diverged": int(any(r.diverged for r in rs)),
                    "n_landmarks": rs[0].n_landmarks,
                }
            )
        return out

    def aggregate_rows(self) -> list[dict]:
        """Per (n_landmarks, selector): mean/median/std of errors and change vs random."""
        rows = self.summary_rows()
        keys = []
        for r in rows:
            k = (r["n_landmarks"], r["selector"])
            if k not in keys:
                keys.append(k)
        order = list(self.config.selectors)
        keys.sort(key=lambda k: (k[0], order.index(k[1]) if k[1] in order else len(order), k[1]))
        out = []
        for n, sel in keys:
            rs = [r for r in rows if r["n_landmarks"] == n and r["selector"] == sel]
            rel = np.array([r["mean_rel_trans_err"] for r in rs if not r["diverged"]])
            ab = np.array([r["mean_abs_trans_err"] for r in rs if not r["diverged"]])
            out.append(
                {
                    "n_landmarks": n,
                    "selector": sel,
                    "n_runs": len(rs),
                    "n_diverged": sum(r["diverged"] for r in rs),
                    "rel_err_mean": _stat(rel, np.mean),
                    "rel_err_median": _stat(rel, np.median),
                    "rel_err_std": _stat(rel, np.std),
                    "abs_err_mean": _stat(ab, np.mean),
                    "abs_err_median": _stat(ab, np.median),
                    "abs_err_std": _stat(ab, np.std),
                    "objective_mean": _mean([r["objective"] for r in rs]),
                    "n_evals_mean": _mean([float(r["n_evals"]) for r in rs]),
                }
            )
        for row in out:
            ref = [r for r in out if r["n_landmarks"] == row["n_landmarks"] and r["selector"] == "random"]
            if ref and ref[0]["rel_err_mean"] > 0:
                row["rel_err_change_vs_random_pct"] = 100.0 * (row["rel_err_mean"] / ref[0]["rel_err_mean"] - 1.0)
            else:
                row["rel_err_change_vs_random_pct"] = math.nan
        return out

    def plot_rows(self) -> list[dict]:
        """Objective versus number of landmarks, one block per metric."""
        out = []
        for kind in MetricKind:
            greedy = f"greedy-{kind.value}"
            if greedy not in self.config.selectors:
                continue
            col = f"objective_{kind.value}"
            for n in sorted({r.n_landmarks for r in self.records}):
                rs = [r for r in self.records if r.n_landmarks == n]

                def avg(sel, attr=col):
                    return _mean([getattr(r, attr) for r in rs if r.selector == sel])

                relaxed = _mean([t for t in self._relaxed_bounds(kind, n)])
                out.append(
                    {
                        "metric": kind.value,
                        "n_landmarks": n,
                        "greedy": avg(greedy),
                        "rounded": avg(f"rounded-{kind.value}"),
                        "relaxed": relaxed,
                        "random": avg("random"),
                    }
                )
        return out

    def _relaxed_bounds(self, kind: MetricKind, n: int) -> list[float]:
        return [r.objective for r in self.records if r.selector == f"relaxed-{kind.value}" and r.n_landmarks == n]


def _mean(xs) -> float:
    xs = [x for x in xs if not math.isnan(x)]
    return float(np.mean(xs)) if xs else math.nan


def _stat(a: np.ndarray, fn) -> float:
    return float(fn(a)) if a.size else math.nan


# ---------------------------------------------------------------------------
# world construction


def _imu(cfg: ExperimentConfig) -> ImuParams:
    s = cfg.imu
    return ImuParams(delta=s.delta, accel_noise_density=s.accel_noise_density, bias_noise_density=s.bias_noise_density, gravity=tuple(s.gravity))


def _camera(cfg: ExperimentConfig) -> CameraModel:
    s = cfg.camera
    return CameraModel(
        focal=s.focal,
        image_size=tuple(s.image_size),
        keyframe_dt=s.keyframe_dt,
        border=s.border,
        extrinsic_translation=np.array(s.extrinsic_translation, dtype=float),
    )


def build_trajectory(cfg: ExperimentConfig) -> Trajectory:
    t = cfg.trajectory
    kf, dt = cfg.camera.keyframe_dt, cfg.imu.delta
    if t.kind == "straight":
        return make_straight_trajectory(t.speed, cfg.duration, kf, dt)
    radius = t.loop_length / (2.0 * math.pi)
    return make_circular_trajectory(radius, t.speed / radius, t.vertical_amplitude, t.vertical_freq, cfg.duration, kf, dt)


def _with_track_probs(cfg: ExperimentConfig, lms: list[Landmark]) -> list[Landmark]:
    floor = cfg.landmarks.track_prob_floor
    if floor is None:
        return lms
    lo, hi = cfg.landmarks.score_range
    return [Landmark(lm.id, lm.position, lm.score, score_to_track_prob(lm.score, lo, hi, floor)) for lm in lms]


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def _run_config(cfg, run_id: int) -> tuple[int, int]:
    """(landmark count, repetition index) of a run id."""
    counts = cfg.landmark_counts
    return counts[run_id // cfg.n_runs], run_id % cfg.n_runs


def n_total_runs(cfg: ExperimentConfig) -> int:
    return cfg.n_runs * len(cfg.landmark_counts)


def run_single(cfg: ExperimentConfig | dict, run_id: int) -> RunOutput:
    """All windows and selectors of one Monte Carlo run."""
    if isinstance(cfg, dict):
        cfg = parse_config(cfg)
    n_lm, _ = _run_config(cfg, run_id)
    ss = np.random.SeedSequence(cfg.master_seed, spawn_key=(run_id,))
    rng_world, rng_win, rng_noise, rng_sel = (np.random.default_rng(c) for c in ss.spawn(4))
    imu, camera = _imu(cfg), _camera(cfg)
    traj = build_trajectory(cfg)
    H = cfg.horizon_frames
    n_starts = traj.n_frames - H
    starts = sorted(int(s) for s in rng_win.choice(n_starts, size=cfg.windows_per_run, replace=False))
    world = None
    if cfg.landmarks.mode == "world":
        world = _with_track_probs(cfg, sample_landmarks(n_lm, cfg.landmarks.box, cfg.landmarks.score_range, seed=_seed(rng_world)))

    records, traces, failures = [], [], []
    for w, start in enumerate(starts):
        tw = traj.window(start, H + 1)
        noise_seed, sel_seed, loss_seed = _seed(rng_noise), _seed(rng_sel), _seed(rng_sel)
        try:
            if world is None:
                lms = _with_track_probs(cfg, sample_candidates(tw, camera, n_lm, cfg.landmarks.box, rng_world, cfg.landmarks.score_range))
            else:
                lms = world
            recs, tr = _run_window(cfg, run_id, w, start, n_lm, tw, imu, camera, lms, noise_seed, sel_seed, loss_seed)
        except (NumericalError, ModelError, np.linalg.LinAlgError, RuntimeError) as exc:
            failures.append(f"run {run_id} window {w}: {exc}")
            recs = [
                WindowRecord(run_id, w, start, n_lm, 0, s, 0, math.nan, math.nan, math.nan, math.nan, 0, 0, math.nan, math.nan, 1)
                for s in cfg.selectors
            ]
            tr = []
        records.extend(recs)
        if w == 0:
            traces.extend(tr)
    return RunOutput(run_id, records, traces, failures)


def _metric_of(cfg: ExperimentConfig, selector: str) -> MetricKind:
    if selector.startswith("greedy-"):
        return MetricKind(selector.split("-", 1)[1])
    return MetricKind(cfg.objective_metric)


def _relaxed_metrics(cfg: ExperimentConfig) -> list[MetricKind]:
    need = set()
    if cfg.certificates:
        need |= {_metric_of(cfg, s) for s in cfg.selectors}
    if "relaxed-rounded" in cfg.selectors:
        need.add(MetricKind(cfg.objective_metric))
        need |= {_metric_of(cfg, s) for s in cfg.selectors if s.startswith("greedy-")}
    return [k for k in MetricKind if k in need]


def _run_window(cfg, run_id, w, start, n_lm, tw, imu, camera, lms, noise_seed, sel_seed, loss_seed):
    from vinselect.analysis import EstimationError, estimate_state, ground_truth

    pc = cfg.prior
    prior = prior_information(pc.position, pc.velocity, pc.bias)
    blocks = build_imu_blocks(tw, imu)
    omega_bar = accumulate_prior_info(blocks, prior, tw.horizon)
    if cfg.vision_weighting == "range":
        weight = lambda lm, fm: range_weight(tw, camera, lm, fm, cfg.pixel_sigma)  # noqa: E731
    else:
        weight = (camera.focal / cfg.pixel_sigma) ** 2
    kept, fms, deltas = candidate_features(tw, camera, lms, weight=weight, require_first_frame=cfg.require_current_view)
    N = len(deltas)
    kappa = min(cfg.kappa_for(n_lm), N)
    ob = omega_bar.data

    relax: dict[MetricKind, RelaxationResult] = {}
    traces = []
    if N > 0 and kappa > 0:
        for kind in _relaxed_metrics(cfg):
            relax[kind] = solve_relaxation(ob, deltas, kind, kappa, cfg.relaxation.max_iters, cfg.relaxation.tol)
            traces.extend((run_id, kind.value, *row) for row in relax[kind].trace)

    metric = MetricKind(cfg.objective_metric)
    sels: list[tuple[str, Selection]] = []
    for s in cfg.selectors:
        if s == "greedy-mineig":
            sel = greedy_select(ob, deltas, MetricKind.MIN_EIG, kappa)
        elif s == "greedy-logdet":
            sel = greedy_select(ob, deltas, MetricKind.LOG_DET, kappa)
        elif s == "random":
            sel = random_select(N, kappa, sel_seed, ob, deltas, metric)
        elif s == "quality":
            sel = quality_select([lm.score for lm in kept], kappa, ob, deltas, metric)
        elif s == "brute":
            sel = brute_force_select(ob, deltas, metric, kappa)
        else:
            sel = relax[metric].rounded if N and kappa else random_select(N, kappa, 0, ob, deltas, metric)
        sels.append((s, sel))
    # bookkeeping rows for the relaxation bounds and per-metric rounding (plot data)
    for kind, res in relax.items():
        sels.append((f"relaxed-{kind.value}", None))
        sels.append((f"rounded-{kind.value}", res.rounded))

    log = simulate_measurement_noise(
        tw, kept, imu, camera, cfg.pixel_sigma, noise_seed, prior_cov=np.linalg.inv(prior), initial_bias=(0.0, 0.0, 0.0)
    )
    truth = ground_truth(tw, log)
    survive = np.ones(N, dtype=bool)
    if cfg.simulate_track_loss and N:
        probs = np.array([d.track_prob for d in deltas])
        survive = np.random.default_rng(loss_seed).random(N) < probs

    recs = []
    for name, sel in sels:
        if sel is None:
            kind = MetricKind(name.split("-", 1)[1])
            f = relax[kind].f_cvx
            recs.append(
                WindowRecord(run_id, w, start, n_lm, N, name, kappa, f, *(f if k is kind else math.nan for k in MetricKind), 0.0, 0, 0, math.nan, math.nan, 0)
            )
            continue
        kind = _metric_of(cfg, name) if not name.startswith("rounded-") else MetricKind(name.split("-", 1)[1])
        obj = {k: objective(k, ob, deltas, sel.chosen) for k in MetricKind}
        gap = relax[kind].f_cvx - obj[kind] if kind in relax else math.nan
        used = [i for i in sel.chosen if survive[i]]
        try:
            _, errs = estimate_state(
                ob,
                blocks,
                [fms[i] for i in used],
                log,
                truth,
                trajectory=tw,
                imu=imu,
                prior_info=prior,
                camera=camera,
                weights=[deltas[i].weight for i in used],
            )
            rel, ab, div = errs.mean_rel_translation, errs.mean_abs_translation, 0
        except EstimationError:
            rel, ab, div = math.nan, math.nan, 1
        recs.append(
            WindowRecord(
                run_id,
                w,
                start,
                n_lm,
                N,
                name,
                kappa,
                obj[kind],
                obj[MetricKind.MIN_EIG],
                obj[MetricKind.LOG_DET],
                gap,
                sel.n_objective_evals,
                len(used),
                rel,
                ab,
                div,
            )
        )
    return recs, traces


def _run_from_dict(args):
    cfg_dict, run_id = args
    return run_single(cfg_dict, run_id)


def monte_carlo(cfg: ExperimentConfig, threads: int = 1) -> MonteCarloResult:
    """Run every configured run; results are reduced in run-id order."""
    ids = list(range(n_total_runs(cfg)))
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads > 1 and len(ids) > 1:
        payload = [(cfg.to_dict(), i) for i in ids]
        with ProcessPoolExecutor(max_workers=threads) as ex:
            outs = list(ex.map(_run_from_dict, payload))
    else:
        outs = [run_single(cfg, i) for i in ids]
    outs.sort(key=lambda o: o.run_id)
    records = [r for o in outs for r in o.records]
    traces = [t for o in outs for t in o.traces]
    failures = [f for o in outs for f in o.failures]
    return MonteCarloResult(cfg, records, traces, failures)


# ---------------------------------------------------------------------------
# CSV output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def rows_to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def summary_csv(result: MonteCarloResult) -> str:
    rows = [r for r in result.summary_rows() if r["selector"] in result.config.selectors]
    return rows_to_csv(rows, SUMMARY_COLUMNS)


def runs_csv(result: MonteCarloResult) -> str:
    cols = [f.name for f in fields(WindowRecord)]
    return rows_to_csv([asdict(r) for r in result.records], cols)


def aggregate_csv(result: MonteCarloResult) -> str:
    rows = [r for r in result.aggregate_rows() if r["selector"] in result.config.selectors]
    cols = list(rows[0]) if rows else ["n_landmarks", "selector"]
    return rows_to_csv(rows, cols)


def plot_csv(result: MonteCarloResult) -> str:
    return rows_to_csv(result.plot_rows(), ["metric", "n_landmarks", "greedy", "rounded", "relaxed", "random"])


def convergence_csv(result: MonteCarloResult) -> str:
    cols = ["run_id", "metric", "iteration", "objective", "fw_gap", "upper_bound"]
    return rows_to_csv([dict(zip(cols, t)) for t in result.traces], cols)
