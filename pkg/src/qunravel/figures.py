"""Matplotlib rendering of run reports.

Every CSV the command-line front end writes has a figure counterpart; the
plots are a convenience view of the same data and are not part of the
byte-identical output contract (PNG encoding is toolkit-dependent).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = [
    "plot_observable",
    "plot_comparison",
    "plot_martingale",
    "plot_trajectory",
    "plot_bench",
]

_BAND_KW = dict(alpha=0.3, linewidth=0)


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_observable(times, mean, stderr, name, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    mean = np.asarray(mean)
    band = 2.0 * np.asarray(stderr)
    ax.fill_between(times, mean - band, mean + band, color="tab:green", **_BAND_KW)
    ax.plot(times, mean, ".", ms=3, color="tab:green", label="ensemble")
    ax.set_xlabel("t")
    ax.set_ylabel(name)
    ax.legend(frameon=False)
    _save(fig, path)


def plot_comparison(times, reference, mean, stderr, name, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    mean = np.asarray(mean)
    band = 2.0 * np.asarray(stderr)
    ax.fill_between(times, mean - band, mean + band, color="tab:green", **_BAND_KW)
    ax.plot(times, mean, ".", ms=3, color="tab:green", label="ensemble")
    ax.plot(times, reference, "k-", lw=1.2, label="master equation")
    ax.set_xlabel("t")
    ax.set_ylabel(name)
    ax.legend(frameon=False)
    _save(fig, path)


def plot_martingale(times, mean_mu, stderr_mu, path):
    fig, ax = plt.subplots(figsize=(5.5, 3.4))
    mean_mu = np.asarray(mean_mu)
    band = 2.0 * np.asarray(stderr_mu)
    ax.fill_between(times, mean_mu - band, mean_mu + band, color="tab:orange", **_BAND_KW)
    ax.plot(times, mean_mu, ".-", ms=3, lw=0.8, color="tab:orange", label="mean weight")
    ax.axhline(1.0, color="k", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("mean weight")
    ax.legend(frameon=False)
    _save(fig, path)


def plot_trajectory(times, populations, mus, jump_times, path):
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5.5, 4.6), sharex=True)
    ax1.plot(times, populations, "d-", ms=3, lw=0.7, color="tab:blue")
    ax1.set_ylabel("excited population")
    ax2.plot(times, mus, "-", color="tab:red", label="weight")
    for s in jump_times:
        ax2.axvline(s, color="0.7", lw=0.6)
    ax2.axhline(0.0, color="k", lw=0.5)
    ax2.set_xlabel("t")
    ax2.set_ylabel("weight")
    _save(fig, path)


def plot_bench(rows, path):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.4))
    ns = [r.n_sites for r in rows]
    ax1.plot(ns, [r.wall_ms_traj_1thread for r in rows], "o-",
             label="trajectories (1 thread)")
    ax1.plot(ns, [r.wall_ms_traj_parallel for r in rows], "s-",
             label="trajectories (parallel)")
    witho = [r for r in rows if r.oracle_ran]
    if witho:
        ax1.plot([r.n_sites for r in witho], [r.wall_ms_oracle for r in witho],
                 "^-", label="master equation")
    ax1.set_yscale("log")
    ax1.set_xlabel("chain sites")
    ax1.set_ylabel("wall time [ms]")
    ax1.legend(frameon=False, fontsize=8)
    if witho:
        ax2.plot([r.n_sites for r in witho], [r.rms_error for r in witho], "o-")
    ax2.set_xlabel("chain sites")
    ax2.set_ylabel("site-population RMS error")
    ax2.set_ylim(bottom=0.0)
    _save(fig, path)
