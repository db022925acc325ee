"""Deterministic reference integrator for the master equation.

Classical fixed-step RK4 on the evolution law, with the state symmetrized
back onto the Hermitian matrices after every step.  Positivity is never
enforced: models with signed weights must be allowed to produce genuinely
negative eigenvalues, and reporting them is part of this module's job.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, hermitian_deviation, hermitian_part, min_eigenvalue
from .model import TimeLocalModel, lgks_rhs

__all__ = ["DensitySeries", "MasterEqError", "integrate", "trace_drift", "min_eigenvalues"]


class MasterEqError(RuntimeError):
    """Integration failure, carrying the time at which it occurred."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} (t={t:g})")
        self.t = t


@dataclass
class DensitySeries:
    """Density matrices recorded on a time grid."""

    times: np.ndarray        # (G,)
    states: np.ndarray       # (G, d, d) Hermitian
    steps_taken: int = 0

    def expectation(self, op: np.ndarray) -> np.ndarray:
        """Real part of ``Tr(op @ rho_t)`` on the grid."""
        return np.einsum("gij,ji->g", self.states, np.asarray(op, dtype=complex)).real


def _rk4_step(model: TimeLocalModel, rho: np.ndarray, t: float, h: float) -> np.ndarray:
    k1 = lgks_rhs(model, rho, t)
    k2 = lgks_rhs(model, rho + 0.5 * h * k1, t + 0.5 * h)
    k3 = lgks_rhs(model, rho + 0.5 * h * k2, t + 0.5 * h)
    k4 = lgks_rhs(model, rho + h * k3, t + h)
    return rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(model, rho, t0, t1, step, adaptive, rel_tol, counter):
    """Integrate from t0 to t1, landing exactly on t1."""
    if not adaptive:
        n = max(1, int(np.ceil((t1 - t0) / step - 1e-12)))
        h = (t1 - t0) / n
        t = t0
        for _ in range(n):
            rho = hermitian_part(_rk4_step(model, rho, t, h))
            t += h
            counter[0] += 1
            if not np.all(np.isfinite(rho.view(float))):
                raise MasterEqError("state blew up during integration", t)
        return rho
    # step-doubling control: compare one h-step against two h/2-steps
    t = t0
    h = min(step, t1 - t0)
    while t < t1 - 1e-15 * max(1.0, abs(t1)):
        h = min(h, t1 - t)
        full = _rk4_step(model, rho, t, h)
        half = _rk4_step(model, rho, t, 0.5 * h)
        half = _rk4_step(model, half, t + 0.5 * h, 0.5 * h)
        err = np.abs(full - half).max() / max(1.0, np.abs(half).max())
        if err <= rel_tol or h <= 1e-12:
            rho = hermitian_part(half)
            t += h
            counter[0] += 2
            if not np.all(np.isfinite(rho.view(float))):
                raise MasterEqError("state blew up during integration", t)
        grow = 0.9 * (rel_tol / max(err, 1e-300)) ** 0.2
        h *= min(5.0, max(0.2, grow))
    return rho


def integrate(
    model: TimeLocalModel,
    rho0: np.ndarray,
    grid,
    step: float,
    adaptive: bool = False,
    rel_tol: float = 1e-8,
) -> DensitySeries:
    """Integrate the master equation, recording states at the grid times.

    ``rho0`` must be Hermitian with unit trace (to 1e-12).  The fixed-step
    mode subdivides each grid interval into steps of size at most ``step``;
    the optional adaptive mode uses step doubling at relative tolerance
    ``rel_tol``.
    """
    rho0 = as_matrix(rho0)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least one point")
    if step <= 0:
        raise ValueError("step must be positive")
    if abs(np.trace(rho0).real - 1.0) > 1e-12 or abs(np.trace(rho0).imag) > 1e-12:
        raise ValueError("rho0 must have unit trace")
    if hermitian_deviation(rho0) > 1e-10:
        raise ValueError("rho0 must be Hermitian")

    states = np.empty((len(grid), model.dim, model.dim), dtype=complex)
    rho = hermitian_part(rho0)
    counter = [0]
    t_prev = grid[0]
    states[0] = rho
    for g in range(1, len(grid)):
        rho = _advance(model, rho, t_prev, grid[g], step, adaptive, rel_tol, counter)
        states[g] = rho
        t_prev = grid[g]
    return DensitySeries(times=grid.copy(), states=states, steps_taken=counter[0])


def trace_drift(series: DensitySeries) -> float:
    """Largest deviation of the recorded traces from one."""
    if len(series.times) == 0:
        raise ValueError("empty series")
    traces = np.einsum("gii->g", series.states)
    return float(np.abs(traces - 1.0).max())


def min_eigenvalues(series: DensitySeries) -> np.ndarray:
    """Smallest eigenvalue of each recorded state (positivity diagnostic)."""
    return np.array([min_eigenvalue(s) for s in series.states])
