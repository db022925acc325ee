"""Batch command-line front end.

Subcommands: ``run`` (oracle and/or trajectory ensemble from a config
file), ``bench`` (chain scaling sweep), ``validate`` (model checks only).
Exit codes: 0 success, 1 validation failures, 2 configuration errors,
3 simulation aborts (printed with the replay seed).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import reports
from .config import ConfigError, RunConfig, load_config
from .ensemble import EnsembleAbort, EnsembleConfig, run as run_ensemble
from .linalg import outer
from .ensemble import _trajectory_rng
from .master_eq import MasterEqError, integrate, min_eigenvalues, trace_drift
from .model import validate_model
from .trajectory import simulate

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qunravel",
                                description="trajectory unraveling toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "integrate the model and/or sample the trajectory ensemble"),
        ("bench", "chain wall-time/error scaling sweep"),
        ("validate", "check the model definition and exit"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, help="configuration file")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the configured master seed")
        sp.add_argument("--threads", type=int, default=None,
                        help="override the configured worker count")
        sp.add_argument("--out", default=None, help="override the output directory")
    return p


def _oracle_observables(series, observables):
    cols = []
    for name, spec in observables:
        arr = np.asarray(spec, dtype=complex)
        op = outer(arr, arr) if arr.ndim == 1 else arr
        cols.append((name, series.expectation(op)))
    return cols


def cmd_run(cfg: RunConfig) -> int:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    summary = {
        "config": cfg.echo,
        "method": cfg.method,
        "seed": cfg.seed,
        "realizations": cfg.realizations,
        "grid_points": len(cfg.grid),
        "violations": {},
        "outputs": [],
        "runtime_seconds": {},
    }

    def emit(name):
        summary["outputs"].append(name)
        return out / name

    series = None
    if cfg.method in ("oracle", "both"):
        rho0 = outer(cfg.psi0, cfg.psi0)
        t0 = time.perf_counter()
        series = integrate(cfg.model, rho0, cfg.grid, cfg.scheme.dt)
        summary["runtime_seconds"]["oracle"] = time.perf_counter() - t0
        cols = _oracle_observables(series, cfg.observables)
        cols.append(("min_eigenvalue", min_eigenvalues(series)))
        reports.write_oracle_csv(emit("oracle.csv"), series.times, cols)
        summary["oracle_trace_drift"] = trace_drift(series)

    estimate = None
    if cfg.method in ("trajectories", "both"):
        econf = EnsembleConfig(
            realizations=cfg.realizations, master_seed=cfg.seed,
            scheme=cfg.scheme, grid=cfg.grid, observables=cfg.observables,
            threads=cfg.threads,
        )
        t0 = time.perf_counter()
        estimate = run_ensemble(cfg.model, cfg.psi0, econf)
        summary["runtime_seconds"]["trajectories"] = time.perf_counter() - t0
        for i, name in enumerate(estimate.observable_names):
            reports.write_observable_csv(
                emit(f"obs_{name}.csv"), estimate.times,
                estimate.observable_mean[i], estimate.observable_stderr[i])
        reports.write_martingale_csv(
            emit("martingale.csv"), estimate.times, estimate.mean_mu,
            estimate.stderr_mu, estimate.mean_abs_mu)
        summary["jump_histogram"] = {str(k): v for k, v in
                                     estimate.jump_histogram.items()}
        for k in range(cfg.dump_trajectories):
            res = simulate(cfg.model, cfg.psi0, cfg.scheme,
                           _trajectory_rng(cfg.seed, k), cfg.grid)
            reports.write_trajectory_csv(emit(f"traj_{k:03d}.csv"), res)
            reports.write_jump_log_csv(emit(f"jumps_{k:03d}.csv"), res.jumps)

    if cfg.method == "both":
        oracle_cols = dict(_oracle_observables(series, cfg.observables))
        for i, name in enumerate(estimate.observable_names):
            bad, total = reports.write_comparison_csv(
                emit(f"compare_{name}.csv"), estimate.times, oracle_cols[name],
                estimate.observable_mean[i], estimate.observable_stderr[i])
            summary["violations"][name] = {
                "outside_band": bad, "grid_points": total,
                "fraction": bad / total,
            }

    if "json" in cfg.formats:
        reports.write_summary_json(out / "summary.json", summary)

    if cfg.figures:
        from . import figures
        if cfg.method == "both":
            oracle_cols = dict(_oracle_observables(series, cfg.observables))
            for i, name in enumerate(estimate.observable_names):
                figures.plot_comparison(
                    estimate.times, oracle_cols[name],
                    estimate.observable_mean[i], estimate.observable_stderr[i],
                    name, out / f"fig_{name}.png")
        elif cfg.method == "trajectories":
            for i, name in enumerate(estimate.observable_names):
                figures.plot_observable(
                    estimate.times, estimate.observable_mean[i],
                    estimate.observable_stderr[i], name, out / f"fig_{name}.png")
        else:
            for name, vals in _oracle_observables(series, cfg.observables):
                figures.plot_comparison(series.times, vals, vals,
                                        np.zeros_like(vals), name,
                                        out / f"fig_{name}.png")
        if estimate is not None:
            figures.plot_martingale(estimate.times, estimate.mean_mu,
                                    estimate.stderr_mu, out / "fig_martingale.png")
        for k in range(cfg.dump_trajectories):
            res = simulate(cfg.model, cfg.psi0, cfg.scheme,
                           _trajectory_rng(cfg.seed, k), cfg.grid)
            pop = np.abs(res.psis[:, 0]) ** 2
            figures.plot_trajectory(res.times, pop, res.mus,
                                    [j.time for j in res.jumps],
                                    out / f"fig_traj_{k:03d}.png")
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    if cfg.bench is None:
        raise ConfigError("bench command needs a [bench] section")
    spec = cfg.bench
    rows = bench_mod.sweep(
        spec.n_list, realizations=spec.realizations, dt=spec.dt,
        horizon=spec.horizon, record_points=spec.record_points,
        master_seed=spec.seed, repeats=spec.repeats,
        oracle_cap_dim=spec.oracle_cap_dim,
        parallel_threads=spec.parallel_threads,
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    reports.write_bench_csv(cfg.out_dir / "bench.csv", rows)
    if cfg.figures:
        from . import figures
        figures.plot_bench(rows, cfg.out_dir / "fig_bench.png")
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    report = validate_model(cfg.model, horizon=cfg.horizon)
    for line in report:
        print(f"violation: {line}")
    if report:
        return EXIT_VALIDATION
    print("model ok")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed,
                          threads_override=args.threads, out_override=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "bench":
            return cmd_bench(cfg)
        return cmd_validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EnsembleAbort as exc:
        print(f"simulation abort: {exc}", file=sys.stderr)
        print(f"replay with trajectory index {exc.trajectory_index} and "
              f"master seed {exc.master_seed}", file=sys.stderr)
        return EXIT_ABORT
    except MasterEqError as exc:
        print(f"simulation abort: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
