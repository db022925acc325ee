"""Wall-time and error scaling of the two solvers over chain size.

Times the deterministic integrator against the trajectory ensemble on the
same grid for a range of chain lengths, and reports the RMS deviation of
the site populations wherever the deterministic run fits under the memory
cap.  Timing covers integration only (no model construction, no I/O) and
takes the median of a few repeats; statistics are seeded and reproducible,
timings obviously are not.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

from .ensemble import EnsembleConfig, run
from .master_eq import integrate
from .models import ChainParams, build_chain, chain_demo_params, site_operator
from .trajectory import SchemeConfig

__all__ = [
    "BenchRow",
    "sweep",
    "trajectory_state_bytes",
    "oracle_state_bytes",
]

_COMPLEX_BYTES = 16


def trajectory_state_bytes(dim: int) -> int:
    """Structural size of one trajectory's evolving state: O(dim)."""
    return dim * _COMPLEX_BYTES


def oracle_state_bytes(dim: int) -> int:
    """Structural size of the deterministic integrator's state: O(dim^2)."""
    return dim * dim * _COMPLEX_BYTES


@dataclass
class BenchRow:
    n_sites: int
    dim: int
    wall_ms_oracle: float | None
    wall_ms_traj_1thread: float
    wall_ms_traj_parallel: float
    realizations: int
    rms_error: float | None

    @property
    def oracle_ran(self) -> bool:
        return self.wall_ms_oracle is not None


def _median_time(fn, repeats: int):
    times = []
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        times.append(1e3 * (time.perf_counter() - t0))
    return float(np.median(times)), result


def sweep(
    n_list,
    realizations: int = 1000,
    dt: float = 0.01,
    horizon: float = 1.0,
    record_points: int = 11,
    master_seed: int = 20,
    repeats: int = 3,
    oracle_cap_dim: int = 512,
    parallel_threads: int | None = None,
    params_fn=chain_demo_params,
) -> list[BenchRow]:
    """Run the chain benchmark for each size in ``n_list``.

    Above ``oracle_cap_dim`` the deterministic run is skipped and the row is
    marked oracle-free (no RMS error); a dimension too large for the
    trajectory state itself rejects the configuration outright.
    """
    if parallel_threads is None:
        parallel_threads = min(os.cpu_count() or 1, 8)
    grid = np.linspace(0.0, horizon, record_points)
    rows = []
    for n in n_list:
        dim = 2 ** int(n)
        if trajectory_state_bytes(dim) > 1 << 30:
            raise ValueError(f"chain of {n} sites exceeds the trajectory memory cap")
        params: ChainParams = params_fn(int(n))
        model = build_chain(params)
        psi0 = np.zeros(dim, dtype=complex)
        psi0[0] = 1.0  # every site excited
        pops = [
            (f"site{k + 1}", np.real(np.diag(
                site_operator(np.diag([1.0, 0.0]).astype(complex), k, int(n)))))
            for k in range(int(n))
        ]
        observables = [(name, np.diag(d.astype(complex))) for name, d in pops]

        scheme = SchemeConfig(variant="bernoulli", dt=dt, p_max=0.1)
        cfg_serial = EnsembleConfig(
            realizations=realizations, master_seed=master_seed, scheme=scheme,
            grid=grid, observables=observables, store_rho=False, threads=1,
        )
        wall_traj, estimate = _median_time(lambda: run(model, psi0, cfg_serial), repeats)
        cfg_par = EnsembleConfig(
            realizations=realizations, master_seed=master_seed, scheme=scheme,
            grid=grid, observables=observables, store_rho=False,
            threads=parallel_threads,
        )
        wall_par, _ = _median_time(lambda: run(model, psi0, cfg_par), repeats)

        wall_oracle = None
        rms = None
        if oracle_state_bytes(dim) <= oracle_state_bytes(oracle_cap_dim):
            rho0 = np.outer(psi0, psi0.conj())
            wall_oracle, series = _median_time(
                lambda: integrate(model, rho0, grid, dt), repeats)
            diffs = []
            for k, (_, diag) in enumerate(pops):
                ref = np.einsum("gii,i->g", series.states, diag).real
                diffs.append(estimate.observable_mean[k] - ref)
            rms = float(np.sqrt(np.mean(np.square(diffs))))
        rows.append(BenchRow(
            n_sites=int(n), dim=dim, wall_ms_oracle=wall_oracle,
            wall_ms_traj_1thread=wall_traj, wall_ms_traj_parallel=wall_par,
            realizations=realizations, rms_error=rms,
        ))
    return rows
