"""Delimited and JSON report writers.

All CSV files use comma separators, '.' decimals, a header row and LF line
endings, with floats printed in shortest round-trip form, so identical
inputs always produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

__all__ = [
    "fmt",
    "write_csv",
    "write_observable_csv",
    "write_martingale_csv",
    "write_comparison_csv",
    "write_oracle_csv",
    "write_bench_csv",
    "write_trajectory_csv",
    "write_jump_log_csv",
    "write_summary_json",
]


def fmt(x) -> str:
    """Shortest round-trip decimal representation."""
    return repr(float(x))


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, str) else fmt(c) for c in row])


def write_observable_csv(path, times, mean, stderr):
    write_csv(path, ["t", "mean", "stderr"], zip(times, mean, stderr))


def write_martingale_csv(path, times, mean_mu, stderr_mu, mean_abs_mu):
    write_csv(path, ["t", "mean_mu", "stderr_mu", "mean_abs_mu"],
              zip(times, mean_mu, stderr_mu, mean_abs_mu))


def write_comparison_csv(path, times, reference, mean, stderr):
    """Reference vs ensemble with a 2-stderr band flag; returns violations."""
    inside = np.abs(np.asarray(mean) - np.asarray(reference)) <= 2.0 * np.asarray(stderr)
    rows = [
        (t, r, mn, se, "1" if ok else "0")
        for t, r, mn, se, ok in zip(times, reference, mean, stderr, inside)
    ]
    write_csv(path, ["t", "oracle", "mc_mean", "mc_stderr", "inside_band"], rows)
    return int(np.count_nonzero(~inside)), len(inside)


def write_oracle_csv(path, times, columns):
    """``columns`` is an ordered list of (name, values)."""
    header = ["t"] + [name for name, _ in columns]
    arrays = [np.asarray(v) for _, v in columns]
    rows = ([t] + [a[i] for a in arrays] for i, t in enumerate(times))
    write_csv(path, header, rows)


def write_bench_csv(path, rows):
    header = ["N", "dim", "wall_ms_oracle", "wall_ms_traj_1thread",
              "wall_ms_traj_parallel", "M", "rms_error"]
    out = []
    for r in rows:
        out.append((
            str(r.n_sites), str(r.dim),
            "" if r.wall_ms_oracle is None else fmt(r.wall_ms_oracle),
            fmt(r.wall_ms_traj_1thread), fmt(r.wall_ms_traj_parallel),
            str(r.realizations),
            "" if r.rms_error is None else fmt(r.rms_error),
        ))
    write_csv(path, header, out)


def write_trajectory_csv(path, result):
    """Per-trajectory dump: time, state components (re/im), weight."""
    d = result.psis.shape[1]
    header = ["t"]
    for i in range(d):
        header += [f"re_psi{i}", f"im_psi{i}"]
    header.append("mu")
    mus = result.mus
    rows = []
    for g, t in enumerate(result.times):
        row = [t]
        for i in range(d):
            row += [result.psis[g, i].real, result.psis[g, i].imag]
        row.append(mus[g])
        rows.append(row)
    write_csv(path, header, rows)


def write_jump_log_csv(path, jumps):
    write_csv(path, ["channel", "time"],
              ((str(j.channel), fmt(j.time)) for j in jumps))


def write_summary_json(path, payload: dict):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
