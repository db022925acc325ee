"""Single-trajectory propagation: deterministic drift, Poisson jumps, weight.

A trajectory is a unit state vector evolving on the unit sphere of the
Hilbert space, punctuated by jumps ``psi -> L psi / |L psi|`` drawn with
intensity ``rate_l(t) |L_l psi|^2``, together with a scalar weight process
``mu`` that starts at one and makes the weighted ensemble average of
``psi psi^+`` reproduce the master equation even when channel weights go
negative.  The weight factorizes into a smooth exponential of
``sum_l (rate_l - gamma_l) |L_l psi|^2`` integrated along the drift, times a
``gamma_l/rate_l`` factor collected at every jump; it is stored as a sign
plus log magnitude because negative-weight episodes grow it exponentially.

Two jump samplers are provided: a per-step Bernoulli scheme (default) and a
waiting-time scheme that accumulates the hazard integral to an exponential
threshold.  The drift can be integrated in nonlinear (norm-preserving) form
or as the underlying linear equation with the norm tracked separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .linalg import as_vector
from .model import ShiftedRate, TimeLocalModel

__all__ = [
    "JumpRecord",
    "SchemeConfig",
    "TrajectoryState",
    "TrajectoryResult",
    "LinearPath",
    "GreenPropagator",
    "DriftKernel",
    "DarkStateJumpError",
    "StepSizeError",
    "NonFiniteStateError",
    "drift_step",
    "jump_apply",
    "step",
    "simulate",
    "replay_nonlinear",
    "propagate_linear",
    "green_propagator",
    "waiting_time_density",
    "wp_decompose",
]

#: below this value of |L psi| a sampled jump is considered a scheme bug
DARK_TOL = 1e-14

#: linear-representation norm window before rescale-and-log kicks in
RESCALE_HI = 1e150
RESCALE_LO = 1e-150


class DarkStateJumpError(RuntimeError):
    pass


class StepSizeError(RuntimeError):
    pass


class NonFiniteStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class JumpRecord:
    channel: int
    time: float


@dataclass(frozen=True)
class SchemeConfig:
    """Jump-sampling scheme and drift representation.

    variant: "bernoulli" draws one Bernoulli per channel per step (at most
    one jump per channel, applied at the step start); "waiting_time"
    accumulates the hazard integral with trapezoidal quadrature on the step
    grid and locates threshold crossings by linear interpolation.
    """

    variant: str = "bernoulli"
    dt: float = 0.01
    p_max: float = 0.1
    representation: str = "nonlinear"

    def __post_init__(self):
        if self.variant not in ("bernoulli", "waiting_time"):
            raise ValueError(f"unknown scheme variant {self.variant!r}")
        if self.representation not in ("nonlinear", "linear"):
            raise ValueError(f"unknown representation {self.representation!r}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (0.0 < self.p_max <= 0.2):
            raise ValueError("p_max must lie in (0, 0.2]")


@dataclass
class TrajectoryState:
    """State of one trajectory: time, unit vector, weight, jump log."""

    t: float
    psi: np.ndarray
    mu_sign: float = 1.0
    log_mu_mag: float = 0.0
    jumps: list = field(default_factory=list)

    @property
    def mu(self) -> float:
        return self.mu_sign * math.exp(self.log_mu_mag)


@dataclass
class TrajectoryResult:
    """One trajectory recorded on a grid."""

    times: np.ndarray        # (G,)
    psis: np.ndarray         # (G, d) unit vectors
    mu_signs: np.ndarray     # (G,)
    log_mu_mags: np.ndarray  # (G,)
    jump_counts: np.ndarray  # (G, L) cumulative per channel
    jumps: list

    @property
    def mus(self) -> np.ndarray:
        return self.mu_signs * np.exp(self.log_mu_mags)


@dataclass
class LinearPath:
    """Linear-representation solution with the norm tracked in log space."""

    times: np.ndarray
    phis: np.ndarray          # (G, d) stored (possibly rescaled) vectors
    log_scales: np.ndarray    # (G,) true phi = phis * exp(log_scales)
    psis: np.ndarray          # (G, d) unit vectors phi/|phi|
    mart_integrals: np.ndarray  # (G,) integral of sum (rate-gamma)|L psi|^2

    def log_norms(self) -> np.ndarray:
        """log |phi_t| including the tracked rescale factors."""
        return self.log_scales + np.log(np.linalg.norm(self.phis, axis=1))


@dataclass(frozen=True)
class GreenPropagator:
    """Fundamental solution of the no-jump linear dynamics on (t_start, t_end)."""

    matrix: np.ndarray
    t_start: float
    t_end: float


class DriftKernel:
    """Precomputed evaluation machinery for one model.

    Splits channels into constant-weight ones (whose ``gamma L^+L`` terms are
    folded into a single base matrix) and time-dependent ones, and detects
    diagonal ``L^+L`` so that jump intensities cost O(d) instead of O(d^2).
    """

    def __init__(self, model: TimeLocalModel):
        self.model = model
        self.dim = model.dim
        self.channels = model.channels
        self.n_channels = len(model.channels)
        h = model.constant_hamiltonian
        self.h_const = h
        self.h_zero = h is not None and not np.any(h)

        self.ldl = model.ldl
        self.ldl_diag = model.ldl_diag

        const = [j for j, ch in enumerate(self.channels) if ch.gamma.is_constant]
        self.td_idx = [j for j in range(self.n_channels) if j not in const]
        self.k_base = None
        if const:
            k = np.zeros((self.dim, self.dim), dtype=complex)
            for j in const:
                k += self.channels[j].gamma.value * self.ldl[j]
            if np.any(k):
                self.k_base = k
            self._k_idx = [j for j in const if self.channels[j].gamma.value != 0.0]
        else:
            self._k_idx = []

        eye = np.eye(self.dim)
        self.trivial_drift = (
            self.h_zero
            and not self.td_idx
            and all(np.array_equal(m, eye) for m in self.ldl)
        )

        # weight/rate templates: constant entries precomputed, the rest
        # re-evaluated per call
        self._gam_template = np.zeros(self.n_channels)
        self._gam_dyn = []
        for j, ch in enumerate(self.channels):
            if ch.gamma.is_constant:
                self._gam_template[j] = ch.gamma.value
            else:
                self._gam_dyn.append(j)
        from .model import AbsValueRate, ConstantRate
        self._rat_template = np.zeros(self.n_channels)
        self._rat_dyn = []
        for j, ch in enumerate(self.channels):
            pol = ch.rate_policy
            if isinstance(pol, ConstantRate):
                self._rat_template[j] = pol.value
            elif isinstance(pol, AbsValueRate) and ch.gamma.is_constant:
                self._rat_template[j] = abs(ch.gamma.value)
            else:
                self._rat_dyn.append(j)

    # -- scalar evaluations -------------------------------------------------

    def weights_and_rates(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        gam = self._gam_template.copy()
        for j in self._gam_dyn:
            gam[j] = self.channels[j].gamma(t)
        rat = self._rat_template.copy()
        for j in self._rat_dyn:
            rat[j] = self.channels[j].rate_policy.rate_at(t, gam[j])
        return gam, rat

    # -- per-channel quadratic forms -----------------------------------------

    def ldl_apply(self, j: int, psi: np.ndarray) -> np.ndarray:
        diag = self.ldl_diag[j]
        if diag is not None:
            return diag * psi
        return self.ldl[j] @ psi

    def channel_q(self, j: int, psi: np.ndarray, abs2=None) -> float:
        """Quadratic form ``psi^+ L^+L psi`` (squared jump amplitude)."""
        diag = self.ldl_diag[j]
        if diag is not None:
            if abs2 is None:
                abs2 = psi.real ** 2 + psi.imag ** 2
            return float(np.dot(diag, abs2))
        return float(np.vdot(psi, self.ldl[j] @ psi).real)

    def channel_norms_sq(self, psi: np.ndarray) -> np.ndarray:
        abs2 = psi.real ** 2 + psi.imag ** 2
        return np.array([self.channel_q(j, psi, abs2) for j in range(self.n_channels)])

    def intensities_at(self, t: float, psi_unit: np.ndarray):
        """Jump intensities ``rate_l |L_l psi|^2`` for a unit state."""
        gam, rat = self.weights_and_rates(t)
        out = np.zeros(self.n_channels)
        abs2 = None
        for j in range(self.n_channels):
            r = rat[j]
            if r != 0.0:
                if abs2 is None:
                    abs2 = psi_unit.real ** 2 + psi_unit.imag ** 2
                out[j] = r * self.channel_q(j, psi_unit, abs2)
        return out, gam, rat

    # -- drift vector fields --------------------------------------------------

    def hamiltonian_at(self, t: float) -> np.ndarray:
        if self.h_const is not None:
            return self.h_const
        return np.asarray(self.model.hamiltonian_at(t), dtype=complex)

    def mart_rate_trivial(self, t: float, norm2: float) -> float:
        gam, rat = self.weights_and_rates(t)
        coef = rat - gam
        if not np.any(coef):
            return 0.0
        return float(coef.sum() * norm2)

    def rhs(self, t: float, psi: np.ndarray, linear: bool = False):
        """Drift field and weight-exponent rate at ``(t, psi)``.

        In nonlinear form the field is
        ``-iH psi - 1/2 sum gamma (L^+L - |L psi|^2) psi``; in linear form the
        ``|L psi|^2`` counterterm is dropped.  The second return value is
        ``sum_l (rate_l - gamma_l) |L_l psi|^2`` with the quadratic forms
        normalized by ``|psi|^2`` in the linear representation.
        """
        gam, rat = self.weights_and_rates(t)
        if self.h_zero:
            acc = np.zeros_like(psi)
        else:
            acc = -1j * (self.hamiltonian_at(t) @ psi)
        nl = 0.0
        qcache: dict[int, float] = {}
        if self.k_base is not None:
            w = self.k_base @ psi
            acc = acc - 0.5 * w
            if not linear:
                nl += float(np.vdot(psi, w).real)
        for j in self.td_idx:
            vec = self.ldl_apply(j, psi)
            q = float(np.vdot(psi, vec).real)
            qcache[j] = q
            g = gam[j]
            if g != 0.0:
                acc = acc - (0.5 * g) * vec
                if not linear:
                    nl += g * q
        if not linear and nl != 0.0:
            acc = acc + (0.5 * nl) * psi

        mart = 0.0
        coef = rat - gam
        if np.any(coef):
            inv_n2 = 1.0
            if linear:
                inv_n2 = 1.0 / float(np.vdot(psi, psi).real)
            abs2 = None
            for j in np.nonzero(coef)[0]:
                q = qcache.get(j)
                if q is None:
                    if abs2 is None and self.ldl_diag[j] is not None:
                        abs2 = psi.real ** 2 + psi.imag ** 2
                    q = self.channel_q(j, psi, abs2)
                mart += coef[j] * q * inv_n2
        return acc, mart

    def linear_generator(self, t: float) -> np.ndarray:
        """Matrix ``-iH(t) - 1/2 sum_l gamma_l(t) L^+L`` of the linear dynamics."""
        gam, _ = self.weights_and_rates(t)
        out = -1j * self.hamiltonian_at(t)
        if self.k_base is not None:
            out = out - 0.5 * self.k_base
        for j in self.td_idx:
            if gam[j] != 0.0:
                out = out - (0.5 * gam[j]) * self.ldl[j]
        return out


def _as_kernel(model_or_kernel) -> DriftKernel:
    if isinstance(model_or_kernel, DriftKernel):
        return model_or_kernel
    return DriftKernel(model_or_kernel)


def _rk4_drift(kernel: DriftKernel, t: float, h: float, psi: np.ndarray,
               linear: bool = False):
    """One RK4 step of the drift; returns the raw new vector and the
    increment of ``log|mu|`` accumulated with the same stages."""
    if h == 0.0:
        return psi, 0.0
    if kernel.trivial_drift and not linear:
        n2 = float(np.vdot(psi, psi).real)
        m1 = kernel.mart_rate_trivial(t, n2)
        m2 = kernel.mart_rate_trivial(t + 0.5 * h, n2)
        m4 = kernel.mart_rate_trivial(t + h, n2)
        return psi, (h / 6.0) * (m1 + 4.0 * m2 + m4)
    k1, m1 = kernel.rhs(t, psi, linear)
    k2, m2 = kernel.rhs(t + 0.5 * h, psi + (0.5 * h) * k1, linear)
    k3, m3 = kernel.rhs(t + 0.5 * h, psi + (0.5 * h) * k2, linear)
    k4, m4 = kernel.rhs(t + h, psi + h * k3, linear)
    out = psi + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    dlog = (h / 6.0) * (m1 + 2.0 * (m2 + m3) + m4)
    return out, dlog


def _checked_norm(vec: np.ndarray, t: float) -> float:
    n = float(np.linalg.norm(vec))
    if not np.isfinite(n) or n == 0.0:
        raise NonFiniteStateError(f"state became non-finite at t={t:g}")
    return n


# ---------------------------------------------------------------------------
# public single-step operations
# ---------------------------------------------------------------------------

def drift_step(state: TrajectoryState, model, dt: float) -> TrajectoryState:
    """Deterministic advance by ``dt``: RK4 on the nonlinear drift, state
    renormalized, weight log-magnitude advanced with the same stages."""
    kernel = _as_kernel(model)
    out, dlog = _rk4_drift(kernel, state.t, dt, state.psi, linear=False)
    out = out / _checked_norm(out, state.t + dt)
    return TrajectoryState(
        t=state.t + dt,
        psi=out,
        mu_sign=state.mu_sign,
        log_mu_mag=state.log_mu_mag + dlog,
        jumps=list(state.jumps),
    )


def jump_apply(state: TrajectoryState, channel: int, model) -> TrajectoryState:
    """Apply channel ``channel`` at the state's current time.

    The vector collapses to ``L psi / |L psi|`` and the weight picks up the
    factor ``gamma/rate``.  Firing a channel with ``|L psi| ~ 0`` means the
    sampled intensity was essentially zero, so it is rejected as a scheme
    bug rather than silently producing garbage.
    """
    kernel = _as_kernel(model)
    ch = kernel.channels[channel]
    raw = ch.op @ state.psi
    nrm = float(np.linalg.norm(raw))
    if nrm <= DARK_TOL:
        raise DarkStateJumpError(
            f"dark-state jump: channel {channel} at t={state.t:g} has |L psi|={nrm:.2e}"
        )
    gam, rat = kernel.weights_and_rates(state.t)
    r = rat[channel]
    if r <= 0.0:
        raise DarkStateJumpError(
            f"channel {channel} fired with nonpositive rate {r:g} at t={state.t:g}"
        )
    factor = gam[channel] / r
    if factor == 0.0:
        sign, logmag = 0.0, 0.0
    else:
        sign = state.mu_sign * math.copysign(1.0, factor)
        logmag = state.log_mu_mag + math.log(abs(factor))
    return TrajectoryState(
        t=state.t,
        psi=raw / nrm,
        mu_sign=sign,
        log_mu_mag=logmag,
        jumps=list(state.jumps) + [JumpRecord(channel, state.t)],
    )


def step(state: TrajectoryState, model, scheme: SchemeConfig, rng) -> TrajectoryState:
    """One scheme step of size ``scheme.dt`` in the nonlinear representation."""
    kernel = _as_kernel(model)
    h = scheme.dt
    if scheme.variant == "bernoulli":
        inten, _, _ = kernel.intensities_at(state.t, state.psi)
        probs = inten * h
        if np.any(probs > scheme.p_max):
            j = int(np.argmax(probs))
            raise StepSizeError(
                f"step too large: channel {j} has jump probability "
                f"{probs[j]:.3g} > p_max={scheme.p_max:g} at t={state.t:g}"
            )
        draws = rng.random(kernel.n_channels)
        for ell in np.nonzero(draws < probs)[0]:
            state = jump_apply(state, int(ell), kernel)
        return drift_step(state, kernel, h)
    # waiting-time: fresh exponential threshold per step (memoryless, so the
    # law is identical to carrying the accumulated hazard across steps)
    t_end = state.t + h
    guard = 0
    while True:
        guard += 1
        if guard > 100000:
            raise RuntimeError("waiting-time step did not terminate")
        span = t_end - state.t
        if span <= 0:
            return state
        lam0 = float(kernel.intensities_at(state.t, state.psi)[0].sum())
        trial, dlog = _rk4_drift(kernel, state.t, span, state.psi, linear=False)
        trial = trial / _checked_norm(trial, t_end)
        lam1 = float(kernel.intensities_at(t_end, trial)[0].sum())
        dhaz = 0.5 * (lam0 + lam1) * span
        thresh = float(rng.standard_exponential())
        if dhaz <= thresh or dhaz <= 0.0:
            return TrajectoryState(
                t=t_end, psi=trial, mu_sign=state.mu_sign,
                log_mu_mag=state.log_mu_mag + dlog, jumps=list(state.jumps),
            )
        theta = thresh / dhaz
        t_star = state.t + theta * span
        part, dlog_p = _rk4_drift(kernel, state.t, theta * span, state.psi, linear=False)
        part = part / _checked_norm(part, t_star)
        state = TrajectoryState(
            t=t_star, psi=part, mu_sign=state.mu_sign,
            log_mu_mag=state.log_mu_mag + dlog_p, jumps=list(state.jumps),
        )
        inten, _, _ = kernel.intensities_at(t_star, state.psi)
        tot = float(inten.sum())
        if tot > 0.0:
            u = float(rng.random())
            ell = int(np.searchsorted(np.cumsum(inten) / tot, u, side="right"))
            ell = min(ell, kernel.n_channels - 1)
            state = jump_apply(state, ell, kernel)


# ---------------------------------------------------------------------------
# grid drivers
# ---------------------------------------------------------------------------

def _substeps(t0: float, t1: float, dt: float) -> tuple[int, float]:
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-12)))
    return n, (t1 - t0) / n


def simulate(model, psi0, scheme: SchemeConfig, rng, grid) -> TrajectoryResult:
    """Propagate one trajectory, recording states at the grid times.

    The initial vector must be normalized to 1e-8; it is renormalized
    exactly before use.  The random stream is consumed in a fixed order
    (per-channel Bernoulli vector per step, or exponential threshold plus
    selection uniform), so a given ``(rng state, scheme, grid)`` always
    reproduces the same trajectory bit for bit.
    """
    kernel = _as_kernel(model)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 1 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    psi = as_vector(psi0)
    n0 = float(np.linalg.norm(psi))
    if abs(n0 * n0 - 1.0) > 1e-8:
        raise ValueError(f"initial state norm^2 deviates from 1 by {abs(n0*n0-1):.2e}")
    psi = psi / n0

    linear = scheme.representation == "linear"
    L = kernel.n_channels
    G = len(grid)
    d = kernel.dim

    psis = np.empty((G, d), dtype=complex)
    signs = np.empty(G)
    logs = np.empty(G)
    counts = np.zeros((G, L), dtype=np.int64)
    jumps: list[JumpRecord] = []

    sign, logmag = 1.0, 0.0
    nu = np.zeros(L, dtype=np.int64)
    log_scale = 0.0  # linear representation only

    def unit(vec):
        return vec / float(np.linalg.norm(vec))

    def record(g):
        psis[g] = unit(psi) if linear else psi
        signs[g] = sign
        logs[g] = logmag
        counts[g] = nu

    def apply_jump(ell, t, gam, rat):
        nonlocal psi, sign, logmag, log_scale
        raw = kernel.channels[ell].op @ psi
        nrm = float(np.linalg.norm(raw))
        ref = float(np.linalg.norm(psi)) if linear else 1.0
        if nrm <= DARK_TOL * ref:
            raise DarkStateJumpError(
                f"dark-state jump: channel {ell} at t={t:g}"
            )
        r = rat[ell]
        if r <= 0.0:
            raise DarkStateJumpError(
                f"channel {ell} fired with nonpositive rate at t={t:g}"
            )
        factor = gam[ell] / r
        if factor == 0.0:
            sign, logmag = 0.0, 0.0
        else:
            sign *= math.copysign(1.0, factor)
            logmag += math.log(abs(factor))
        psi = raw if linear else raw / nrm
        nu[ell] += 1
        jumps.append(JumpRecord(int(ell), float(t)))

    def drift(a, h):
        nonlocal psi, logmag, log_scale
        out, dlog = _rk4_drift(kernel, a, h, psi, linear)
        if linear:
            n = _checked_norm(out, a + h)
            if n > RESCALE_HI or n < RESCALE_LO:
                out = out / n
                log_scale += math.log(n)
            psi = out
        else:
            psi = out / _checked_norm(out, a + h)
        logmag += dlog

    def bernoulli_substep(a, h):
        nonlocal psi
        pu = unit(psi) if linear else psi
        inten, gam, rat = kernel.intensities_at(a, pu)
        probs = inten * h
        if np.any(probs > scheme.p_max):
            j = int(np.argmax(probs))
            raise StepSizeError(
                f"step too large: channel {j} has jump probability "
                f"{probs[j]:.3g} > p_max={scheme.p_max:g} at t={a:g}"
            )
        draws = rng.random(L)
        fired = np.nonzero(draws < probs)[0]
        for ell in fired:
            apply_jump(int(ell), a, gam, rat)
        drift(a, h)

    def waiting_substep(a, h):
        nonlocal psi, logmag, log_scale
        t = a
        t_end = a + h
        guard = 0
        while True:
            guard += 1
            if guard > 100000:
                raise RuntimeError("waiting-time substep did not terminate")
            span = t_end - t
            if span <= 0:
                return
            pu = unit(psi) if linear else psi
            lam0 = float(kernel.intensities_at(t, pu)[0].sum())
            out, dlog = _rk4_drift(kernel, t, span, psi, linear)
            pu1 = unit(out)
            lam1 = float(kernel.intensities_at(t_end, pu1)[0].sum())
            dhaz = 0.5 * (lam0 + lam1) * span
            thresh = float(rng.standard_exponential())
            if dhaz <= thresh or dhaz <= 0.0:
                if linear:
                    n = _checked_norm(out, t_end)
                    if n > RESCALE_HI or n < RESCALE_LO:
                        out = out / n
                        log_scale += math.log(n)
                    psi = out
                else:
                    psi = out / _checked_norm(out, t_end)
                logmag += dlog
                return
            theta = thresh / dhaz
            t_star = t + theta * span
            drift(t, theta * span)
            pu = unit(psi) if linear else psi
            inten, gam, rat = kernel.intensities_at(t_star, pu)
            tot = float(inten.sum())
            if tot > 0.0:
                u = float(rng.random())
                ell = int(np.searchsorted(np.cumsum(inten) / tot, u, side="right"))
                ell = min(ell, L - 1)
                apply_jump(ell, t_star, gam, rat)
            t = t_star

    record(0)
    for g in range(1, G):
        n, h = _substeps(grid[g - 1], grid[g], scheme.dt)
        for k in range(n):
            a = grid[g - 1] + k * h
            if scheme.variant == "bernoulli":
                bernoulli_substep(a, h)
            else:
                waiting_substep(a, h)
        record(g)

    return TrajectoryResult(
        times=grid.copy(), psis=psis, mu_signs=signs, log_mu_mags=logs,
        jump_counts=counts, jumps=jumps,
    )


def _sorted_jumps(jumps) -> list[JumpRecord]:
    out = [j if isinstance(j, JumpRecord) else JumpRecord(int(j[0]), float(j[1]))
           for j in jumps]
    times = [j.time for j in out]
    if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
        raise ValueError("jump times must be strictly increasing")
    return out


def replay_nonlinear(model, psi0, jumps, grid, dt: float) -> TrajectoryResult:
    """Deterministically propagate along a fixed jump record (nonlinear form)."""
    kernel = _as_kernel(model)
    grid = np.asarray(grid, dtype=float)
    jumps = _sorted_jumps(jumps)
    psi = as_vector(psi0)
    psi = psi / float(np.linalg.norm(psi))
    L = kernel.n_channels
    G = len(grid)
    psis = np.empty((G, kernel.dim), dtype=complex)
    signs = np.empty(G)
    logs = np.empty(G)
    counts = np.zeros((G, L), dtype=np.int64)

    state = TrajectoryState(t=float(grid[0]), psi=psi)
    events = [(j.time, 0, j.channel) for j in jumps] + [(t, 1, g) for g, t in enumerate(grid)]
    events.sort(key=lambda e: (e[0], e[1]))
    nu = np.zeros(L, dtype=np.int64)
    for when, kind, payload in events:
        if when < state.t - 1e-12:
            raise ValueError("jump time precedes the grid start")
        span = when - state.t
        if span > 0:
            n, h = _substeps(state.t, when, dt)
            for _ in range(n):
                state = drift_step(state, kernel, h)
        state = replace(state, t=when)
        if kind == 0:
            state = jump_apply(state, payload, kernel)
            nu[payload] += 1
        else:
            g = payload
            psis[g] = state.psi
            signs[g] = state.mu_sign
            logs[g] = state.log_mu_mag
            counts[g] = nu
    return TrajectoryResult(times=grid.copy(), psis=psis, mu_signs=signs,
                            log_mu_mags=logs, jump_counts=counts, jumps=list(jumps))


def propagate_linear(model, phi0, jumps, grid, dt: float) -> LinearPath:
    """Integrate the linear form along a fixed jump record.

    Between jumps ``d phi = (-iH - 1/2 sum gamma L^+L) phi``; at a jump the
    bare operator is applied without normalization.  The norm is tracked in
    log space (rescale-and-log outside ``[1e-150, 1e150]``) and the weight
    exponent ``int sum (rate-gamma)|L psi|^2`` is accumulated along the way.
    """
    kernel = _as_kernel(model)
    grid = np.asarray(grid, dtype=float)
    jumps = _sorted_jumps(jumps)
    phi = as_vector(phi0).copy()
    G = len(grid)
    phis = np.empty((G, kernel.dim), dtype=complex)
    log_scales = np.empty(G)
    psis = np.empty((G, kernel.dim), dtype=complex)
    mart = np.empty(G)

    t = float(grid[0])
    log_scale = 0.0
    mart_acc = 0.0

    events = [(j.time, 0, j.channel) for j in jumps] + [(tt, 1, g) for g, tt in enumerate(grid)]
    events.sort(key=lambda e: (e[0], e[1]))
    for when, kind, payload in events:
        span = when - t
        if span < -1e-12:
            raise ValueError("jump time precedes the grid start")
        if span > 0:
            n, h = _substeps(t, when, dt)
            for k in range(n):
                a = t + k * h
                phi, dlog = _rk4_drift(kernel, a, h, phi, linear=True)
                mart_acc += dlog
                nrm = _checked_norm(phi, a + h)
                if nrm > RESCALE_HI or nrm < RESCALE_LO:
                    phi = phi / nrm
                    log_scale += math.log(nrm)
        t = when
        if kind == 0:
            phi = kernel.channels[payload].op @ phi
            _checked_norm(phi, t)
        else:
            g = payload
            phis[g] = phi
            log_scales[g] = log_scale
            psis[g] = phi / float(np.linalg.norm(phi))
            mart[g] = mart_acc
    return LinearPath(times=grid.copy(), phis=phis, log_scales=log_scales,
                      psis=psis, mart_integrals=mart)


def green_propagator(model, s: float, t: float, dt: float) -> GreenPropagator:
    """Fundamental matrix of the no-jump linear dynamics from ``s`` to ``t``."""
    if t < s:
        raise ValueError("require s <= t")
    kernel = _as_kernel(model)
    G = np.eye(kernel.dim, dtype=complex)
    if t > s:
        n, h = _substeps(s, t, dt)
        for k in range(n):
            a = s + k * h
            k1 = kernel.linear_generator(a) @ G
            k2 = kernel.linear_generator(a + 0.5 * h) @ (G + 0.5 * h * k1)
            k3 = kernel.linear_generator(a + 0.5 * h) @ (G + 0.5 * h * k2)
            k4 = kernel.linear_generator(a + h) @ (G + h * k3)
            G = G + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            if not np.all(np.isfinite(G.view(float))):
                raise NonFiniteStateError(f"propagator became non-finite at t={a + h:g}")
    return GreenPropagator(matrix=G, t_start=float(s), t_end=float(t))


def waiting_time_density(model, z, jumps, t: float, t0: float = 0.0,
                         dt: float = 1e-3) -> float:
    """Probability density of observing exactly the given jump record.

    Evaluates, for a unit initial vector ``z`` and ordered jumps
    ``(channel_i, s_i)`` inside ``(t0, t)``, the multi-time density of the
    record: the product of the sampled rates at the jump times, times the
    squared norm of the linear solution with the bare operators applied at
    the jumps, divided by the accumulated no-jump weight factors.  Intended
    for validation at small jump numbers; summed over records and
    integrated over times it is normalized to one.
    """
    kernel = _as_kernel(model)
    z = as_vector(z)
    if abs(float(np.linalg.norm(z)) - 1.0) > 1e-10:
        raise ValueError("z must be a unit vector")
    jumps = _sorted_jumps(jumps)
    if jumps and (jumps[0].time <= t0 or jumps[-1].time >= t):
        raise ValueError("jump times must lie strictly inside (t0, t)")
    log_rates = 0.0
    for j in jumps:
        _, rat = kernel.weights_and_rates(j.time)
        r = rat[j.channel]
        if r <= 0.0:
            return 0.0
        log_rates += math.log(r)
    path = propagate_linear(kernel, z, jumps, np.array([t0, t]), dt)
    log_norm = path.log_norms()[-1]
    log_p = log_rates + 2.0 * log_norm - path.mart_integrals[-1]
    return math.exp(log_p)


def wp_decompose(mus) -> tuple[np.ndarray, np.ndarray]:
    """Split a weight series into its positive and negative parts.

    Returns ``(max(0, mu), max(0, -mu))``; the difference reconstructs the
    input exactly and the two parts are never simultaneously nonzero.
    """
    mus = np.asarray(mus, dtype=float)
    return np.maximum(mus, 0.0), np.maximum(-mus, 0.0)
