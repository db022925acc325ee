"""Time-local master equations with signed channel weights.

A model is a Hamiltonian (constant matrix or a matrix-valued function of
time) plus a list of channels.  Each channel carries a constant Lindblad
operator ``L``, a signed scalar weight function ``gamma(t)``, a rate policy
producing the strictly positive jump intensity prefactor ``rate(t)`` used by
the stochastic schemes, and optionally the energy quantum it exchanges.

Models are immutable after construction and safe to share between
trajectory workers; weight evaluation must be re-entrant.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .linalg import as_matrix, dagger, hermitian_deviation

__all__ = [
    "TimeScalar",
    "ConstantScalar",
    "FuncScalar",
    "TabulatedScalar",
    "as_time_scalar",
    "RatePolicy",
    "AbsValueRate",
    "ConstantRate",
    "CustomRate",
    "ShiftedRate",
    "Channel",
    "TimeLocalModel",
    "lgks_rhs",
    "validate_model",
]


class TimeScalar:
    """Real scalar function of time with an optional declared bound.

    The bound is a user declaration of ``sup |f(t)|`` over the simulation
    horizon; it is checked against samples by :func:`validate_model` but is
    never verified symbolically.
    """

    is_constant = False
    bound: float | None = None

    def __call__(self, t: float) -> float:  # pragma: no cover - interface
        raise NotImplementedError


class ConstantScalar(TimeScalar):
    is_constant = True

    def __init__(self, value: float):
        self.value = float(value)
        self.bound = abs(self.value)

    def __call__(self, t: float) -> float:
        return self.value

    def __repr__(self):
        return f"ConstantScalar({self.value!r})"


class FuncScalar(TimeScalar):
    def __init__(self, fn: Callable[[float], float], bound: float | None = None):
        self.fn = fn
        self.bound = bound

    def __call__(self, t: float) -> float:
        return float(self.fn(t))

    def __repr__(self):
        return f"FuncScalar({self.fn!r})"


class TabulatedScalar(TimeScalar):
    """Sample table with linear interpolation; clamps outside the table."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape:
            raise ValueError("times and values must be 1d arrays of equal length")
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        self.bound = float(np.abs(self.values).max())

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def __repr__(self):
        return f"TabulatedScalar(<{len(self.times)} samples>)"


def as_time_scalar(spec) -> TimeScalar:
    """Coerce a number, callable or TimeScalar to a TimeScalar."""
    if isinstance(spec, TimeScalar):
        return spec
    if isinstance(spec, (int, float)):
        return ConstantScalar(spec)
    if callable(spec):
        return FuncScalar(spec)
    raise TypeError(f"cannot interpret {spec!r} as a time scalar")


class RatePolicy:
    """Maps the signed weight ``gamma(t)`` to the jump intensity prefactor.

    A rate of exactly zero marks the channel dormant at that instant: no
    jump can fire, and because the weight then matches the rate the path
    weight is unaffected, so dormancy is exact rather than an approximation.
    """

    def rate_at(self, t: float, gamma_t: float) -> float:  # pragma: no cover
        raise NotImplementedError


class AbsValueRate(RatePolicy):
    """rate = |gamma|; dormant whenever the weight crosses zero."""

    def rate_at(self, t: float, gamma_t: float) -> float:
        return abs(gamma_t)

    def __repr__(self):
        return "AbsValueRate()"


class ConstantRate(RatePolicy):
    def __init__(self, value: float):
        self.value = float(value)

    def rate_at(self, t: float, gamma_t: float) -> float:
        return self.value

    def __repr__(self):
        return f"ConstantRate({self.value!r})"


class CustomRate(RatePolicy):
    def __init__(self, fn):
        self.fn = as_time_scalar(fn)

    def rate_at(self, t: float, gamma_t: float) -> float:
        return self.fn(t)

    def __repr__(self):
        return f"CustomRate({self.fn!r})"


class ShiftedRate(RatePolicy):
    """rate = gamma - shift(t), sharing one shift across a channel pair.

    The shift must be common to both partners and their operators must
    satisfy ``L1^+ L1 + L2^+ L2 = 1`` so that swapping weights for rates
    leaves the deterministic drift unchanged on the unit sphere.
    """

    def __init__(self, shift, partner: int | None = None):
        self.shift = as_time_scalar(shift)
        self.partner = partner

    def rate_at(self, t: float, gamma_t: float) -> float:
        return gamma_t - self.shift(t)

    def __repr__(self):
        return f"ShiftedRate(partner={self.partner})"


@dataclass(frozen=True)
class Channel:
    """One dissipation channel of the master equation."""

    op: np.ndarray
    gamma: TimeScalar
    rate_policy: RatePolicy = field(default_factory=AbsValueRate)
    energy_quantum: float | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "op", as_matrix(self.op))
        object.__setattr__(self, "gamma", as_time_scalar(self.gamma))
        if not np.any(self.op):
            raise ValueError("channel operator must be nonzero")


class TimeLocalModel:
    """Hamiltonian plus weighted channels defining the evolution law.

    Parameters
    ----------
    dim : Hilbert-space dimension.
    hamiltonian : constant matrix, or callable ``t -> matrix`` (Hermitian at
        every sampled time).
    channels : sequence of :class:`Channel`, all ``dim x dim``.
    bare_hamiltonian : optional constant Hermitian matrix used by the
        energy-balance bookkeeping; its eigenoperator structure is checked
        there, not here.
    """

    def __init__(self, dim, hamiltonian, channels: Sequence[Channel],
                 bare_hamiltonian=None, label: str = ""):
        self.dim = int(dim)
        self.label = label
        if callable(hamiltonian):
            self._h_fn = hamiltonian
            self._h_const = None
        else:
            self._h_fn = None
            self._h_const = as_matrix(hamiltonian)
            if self._h_const.shape != (self.dim, self.dim):
                raise ValueError("hamiltonian has wrong dimension")
        self.channels = list(channels)
        for ch in self.channels:
            if ch.op.shape != (self.dim, self.dim):
                raise ValueError("channel operator has wrong dimension")
        # cached L^+ L per channel, plus its diagonal when it is diagonal
        self.ldl = [dagger(ch.op) @ ch.op for ch in self.channels]
        self.ldl_diag = []
        for m in self.ldl:
            off = m - np.diag(np.diag(m))
            self.ldl_diag.append(np.real(np.diag(m)).copy() if not np.any(off) else None)
        self.bare_hamiltonian = None
        if bare_hamiltonian is not None:
            self.bare_hamiltonian = as_matrix(bare_hamiltonian)
            if self.bare_hamiltonian.shape != (self.dim, self.dim):
                raise ValueError("bare hamiltonian has wrong dimension")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def constant_hamiltonian(self) -> np.ndarray | None:
        return self._h_const

    def hamiltonian_at(self, t: float) -> np.ndarray:
        if self._h_const is not None:
            return self._h_const
        return np.asarray(self._h_fn(t), dtype=complex)

    def gammas_at(self, t: float) -> np.ndarray:
        return np.array([ch.gamma(t) for ch in self.channels], dtype=float)

    def rates_at(self, t: float) -> np.ndarray:
        return np.array(
            [ch.rate_policy.rate_at(t, ch.gamma(t)) for ch in self.channels],
            dtype=float,
        )


def lgks_rhs(model: TimeLocalModel, rho: np.ndarray, t: float) -> np.ndarray:
    """Right-hand side of the evolution law at time ``t``.

    Returns ``-i[H, rho] + sum_l gamma_l (L rho L^+ - (L^+L rho + rho L^+L)/2)``,
    which is traceless and Hermitian for Hermitian input.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (model.dim, model.dim):
        raise ValueError(f"rho has shape {rho.shape}, expected ({model.dim}, {model.dim})")
    h = model.hamiltonian_at(t)
    out = -1j * (h @ rho - rho @ h)
    for j, ch in enumerate(model.channels):
        g = ch.gamma(t)
        if not np.isfinite(g):
            raise ValueError(f"channel {j} weight is not finite at t={t}")
        if g == 0.0:
            continue
        L = ch.op
        sandwich = L @ rho @ dagger(L)
        diag = model.ldl_diag[j]
        if diag is not None:
            anti = diag[:, None] * rho + rho * diag[None, :]
        else:
            ldl = model.ldl[j]
            anti = ldl @ rho + rho @ ldl
        out += g * (sandwich - 0.5 * anti)
    return out


def validate_model(model: TimeLocalModel, horizon: float = 1.0,
                   samples: int = 41) -> list[str]:
    """Report structural violations of the model contract.

    Checks, on a uniform time grid over ``[0, horizon]``: Hermiticity of the
    sampled Hamiltonian, finiteness of the weights, consistency with any
    declared weight bounds, and positivity of the rate policies wherever a
    channel is active.  Returns a list of human-readable violations; an
    empty list means the model passed.
    """
    report: list[str] = []
    ts = np.linspace(0.0, horizon, samples)
    for t in ts:
        h = np.asarray(model.hamiltonian_at(t), dtype=complex)
        if h.shape != (model.dim, model.dim):
            report.append(f"hamiltonian has shape {h.shape} at t={t:g}")
            break
        dev = hermitian_deviation(h)
        if dev > 1e-10:
            report.append(f"hamiltonian deviates from Hermitian by {dev:.2e} at t={t:g}")
            break
    for j, ch in enumerate(model.channels):
        name = ch.label or f"channel {j}"
        gvals = np.array([ch.gamma(t) for t in ts])
        if not np.all(np.isfinite(gvals)):
            report.append(f"{name}: weight is non-finite on the horizon")
            continue
        if ch.gamma.bound is not None and np.abs(gvals).max() > ch.gamma.bound * (1 + 1e-12):
            report.append(
                f"{name}: sampled |weight| {np.abs(gvals).max():.6g} exceeds "
                f"declared bound {ch.gamma.bound:.6g}"
            )
        rvals = np.array([ch.rate_policy.rate_at(t, g) for t, g in zip(ts, gvals)])
        if not np.all(np.isfinite(rvals)):
            report.append(f"{name}: rate is non-finite on the horizon")
            continue
        if np.any(rvals < 0):
            tbad = ts[int(np.argmin(rvals))]
            report.append(f"{name}: rate is negative ({rvals.min():.6g}) at t={tbad:g}")
        # a rate pinned at zero while the weight is nonzero would silently
        # freeze the channel; |gamma|-type dormancy (rate == 0 exactly when
        # gamma == 0) is fine
        stuck = (rvals == 0.0) & (gvals != 0.0)
        if np.any(stuck):
            tbad = ts[int(np.argmax(stuck))]
            report.append(f"{name}: rate is zero while the weight is nonzero at t={tbad:g}")
        if isinstance(ch.rate_policy, ShiftedRate):
            p = ch.rate_policy.partner
            if p is None or not (0 <= p < model.n_channels):
                report.append(f"{name}: shifted rate policy has no valid partner")
            else:
                comb = model.ldl[j] + model.ldl[p]
                if np.abs(comb - np.eye(model.dim)).max() > 1e-12:
                    report.append(
                        f"{name}: shifted pair operators do not satisfy "
                        "L1^+L1 + L2^+L2 = 1"
                    )
    return report
