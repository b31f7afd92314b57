"""Command line entry point: ``vinselect run|presets|validate``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from vinselect.config import ConfigError, ExperimentConfig, load_config, preset, preset_names

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

OUTPUT_FILES = ("summary.csv", "runs.csv", "aggregate.csv", "plot_objective_vs_n.csv", "convergence.csv", "config.json")


def resolve_config(arg: str) -> ExperimentConfig:
    """A config file path, or the name of a shipped preset."""
    if Path(arg).is_file():
        return load_config(arg)
    if arg in preset_names():
        return preset(arg)
    raise ConfigError([("<config>", f"{arg!r} is neither a readable file nor a preset ({', '.join(preset_names())})")])


def _report_config_error(exc: ConfigError) -> int:
    print("configuration error:", file=sys.stderr)
    for path, msg in exc.errors:
        print(f"  {path}: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def write_outputs(result, out_dir: Path) -> dict[str, Path]:
    from vinselect import experiment as ex

    out_dir.mkdir(parents=True, exist_ok=True)
    texts = {
        "summary.csv": ex.summary_csv(result),
        "runs.csv": ex.runs_csv(result),
        "aggregate.csv": ex.aggregate_csv(result),
        "plot_objective_vs_n.csv": ex.plot_csv(result),
        "convergence.csv": ex.convergence_csv(result),
        "config.json": result.config.to_json(),
    }
    paths = {}
    for name, text in texts.items():
        p = out_dir / name
        with open(p, "w", newline="\n") as fh:
            fh.write(text)
        paths[name] = p
    return paths


def _num(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.4g}"


def digest(result) -> str:
    cfg = result.config
    lines = [f"{cfg.name}: {len({r.run_id for r in result.records})} runs, selectors {', '.join(cfg.selectors)}"]
    lines.append(f"{'N':>5} {'selector':<16} {'rel err':>10} {'abs err':>10} {'vs random':>10} {'objective':>11} {'evals':>8} {'div':>4}")
    for r in result.aggregate_rows():
        if r["selector"] not in cfg.selectors:
            continue
        chg = r["rel_err_change_vs_random_pct"]
        lines.append(
            f"{r['n_landmarks']:>5} {r['selector']:<16} {_num(r['rel_err_mean']):>10} {_num(r['abs_err_mean']):>10} "
            f"{(_num(chg) + '%') if not math.isnan(chg) else '-':>10} {_num(r['objective_mean']):>11} "
            f"{_num(r['n_evals_mean']):>8} {r['n_diverged']:>4}"
        )
    if result.failures:
        lines.append(f"{len(result.failures)} window failures recorded (first: {result.failures[0]})")
    return "\n".join(lines)


def cmd_run(args) -> int:
    try:
        cfg = resolve_config(args.config)
        over = {}
        if args.seed_override is not None:
            over["master_seed"] = args.seed_override
        if args.out is not None:
            over["output_dir"] = args.out
        if over:
            cfg = cfg.with_overrides(**over)
    except ConfigError as exc:
        return _report_config_error(exc)
    if args.threads < 0:
        return _report_config_error(ConfigError([("--threads", "must be >= 0")]))

    from vinselect.experiment import monte_carlo

    try:
        result = monte_carlo(cfg, threads=args.threads)
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    paths = write_outputs(result, Path(cfg.output_dir))
    print(digest(result))
    print(f"wrote {len(paths)} files to {cfg.output_dir}")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.show:
        try:
            print(preset(args.show).to_json(), end="")
        except ConfigError as exc:
            return _report_config_error(exc)
        return EXIT_OK
    for name in preset_names():
        cfg = preset(name)
        ns = cfg.landmark_counts
        print(f"{name}: {cfg.trajectory.kind}, N={ns if len(ns) > 1 else ns[0]}, kappa={cfg.kappa}, runs={cfg.n_runs}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = resolve_config(args.config)
    except ConfigError as exc:
        return _report_config_error(exc)
    print(f"ok: {cfg.name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vinselect", description="Anticipation-aware visual feature selection benchmarks.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte Carlo experiment")
    r.add_argument("config", help="JSON config file or preset name")
    r.add_argument("--threads", type=int, default=1, help="worker processes (0 = one per CPU)")
    r.add_argument("--seed-override", type=int, default=None, help="replace master_seed")
    r.add_argument("--out", default=None, help="replace output_dir")
    r.set_defaults(func=cmd_run)

    ps = sub.add_parser("presets", help="list shipped presets")
    ps.add_argument("--show", metavar="NAME", default=None, help="print one preset as JSON")
    ps.set_defaults(func=cmd_presets)

    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
