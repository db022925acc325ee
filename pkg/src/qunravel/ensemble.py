"""Monte Carlo ensemble: weighted averages, error bars, diagnostics.

Each trajectory owns a counter-based random stream keyed by
``(master_seed, trajectory_index)``, so the statistics cannot depend on how
work is scheduled.  Accumulation happens in fixed chunks of consecutive
trajectory indices, sequentially inside a chunk and by a pairwise tree over
chunks, which makes the estimate bit-identical for any worker count.

Error bars follow the convention of reporting both the sample standard
deviation and the standard error of the mean; comparisons against the
deterministic integrator use two standard errors.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import as_vector, dagger
from .master_eq import DensitySeries
from .model import TimeLocalModel
from .trajectory import DriftKernel, SchemeConfig, simulate

__all__ = [
    "EnsembleConfig",
    "EnsembleEstimate",
    "EnsembleAbort",
    "PhotocurrentSeries",
    "EnergyBalanceReport",
    "run",
    "martingale_diagnostic",
    "photocurrent",
    "energy_balance_check",
    "wp_split_average",
]

#: trajectories per accumulation chunk; fixed so that the reduction tree is
#: independent of the worker count
CHUNK_SIZE = 64


class EnsembleAbort(RuntimeError):
    """A trajectory failed; carries what is needed to replay it."""

    def __init__(self, trajectory_index: int, master_seed: int, cause: Exception):
        super().__init__(
            f"trajectory {trajectory_index} aborted (master_seed={master_seed}): {cause}"
        )
        self.trajectory_index = trajectory_index
        self.master_seed = master_seed
        self.cause = cause


@dataclass
class EnsembleConfig:
    """Size, seeding, scheme and outputs of one ensemble run."""

    realizations: int
    master_seed: int
    scheme: SchemeConfig
    grid: np.ndarray
    observables: list = field(default_factory=list)  # (name, matrix | vector)
    store_rho: bool | None = None   # None: on for dim <= 64
    threads: int = 1

    def __post_init__(self):
        if self.realizations < 1:
            raise ValueError("need at least one realization")
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim != 1 or len(self.grid) < 1 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")


@dataclass
class EnsembleEstimate:
    """Weighted ensemble averages on the record grid."""

    times: np.ndarray
    realizations: int
    master_seed: int
    # weighted mean of mu psi psi^+, split into its positive/negative parts
    rho_hat: np.ndarray | None
    rho_plus: np.ndarray | None
    rho_minus: np.ndarray | None
    observable_names: list
    observable_mean: np.ndarray    # (O, G)
    observable_stderr: np.ndarray  # (O, G)
    observable_std: np.ndarray     # (O, G)
    mean_mu: np.ndarray
    stderr_mu: np.ndarray
    std_mu: np.ndarray
    mean_abs_mu: np.ndarray
    # weighted jump-count series E(mu nu_l) and per-interval increments
    mean_munu: np.ndarray          # (L, G)
    inc_mean: np.ndarray           # (L, G-1)
    inc_stderr: np.ndarray         # (L, G-1)
    jump_histogram: dict

    def observable(self, name: str):
        i = self.observable_names.index(name)
        return self.observable_mean[i], self.observable_stderr[i]


def _trajectory_rng(master_seed: int, index: int):
    key = np.array([master_seed % (1 << 64), index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _prep_observables(observables, dim):
    """Normalize observable specs to evaluation closures over (psis, abs2)."""
    prepped = []
    for name, spec in observables:
        arr = np.asarray(spec, dtype=complex)
        if arr.ndim == 1:
            if arr.shape[0] != dim:
                raise ValueError(f"observable {name!r} has wrong dimension")
            prepped.append((name, "vector", arr))
        elif arr.ndim == 2:
            if arr.shape != (dim, dim):
                raise ValueError(f"observable {name!r} has wrong shape")
            off = arr - np.diag(np.diag(arr))
            if not np.any(off) and np.abs(np.diag(arr).imag).max() == 0.0:
                prepped.append((name, "diag", np.real(np.diag(arr)).copy()))
            else:
                prepped.append((name, "matrix", arr))
        else:
            raise ValueError(f"observable {name!r} must be a vector or matrix")
    return prepped


@dataclass
class _ChunkAccum:
    n: int
    sum_plus: np.ndarray | None
    sum_minus: np.ndarray | None
    obs_sum: np.ndarray
    obs_sumsq: np.ndarray
    mu_sum: np.ndarray
    mu_sumsq: np.ndarray
    abs_mu_sum: np.ndarray
    munu_sum: np.ndarray
    inc_sum: np.ndarray
    inc_sumsq: np.ndarray
    jump_hist: dict

    @staticmethod
    def zeros(G, d, n_obs, L, store_rho):
        return _ChunkAccum(
            n=0,
            sum_plus=np.zeros((G, d, d), dtype=complex) if store_rho else None,
            sum_minus=np.zeros((G, d, d), dtype=complex) if store_rho else None,
            obs_sum=np.zeros((n_obs, G)),
            obs_sumsq=np.zeros((n_obs, G)),
            mu_sum=np.zeros(G),
            mu_sumsq=np.zeros(G),
            abs_mu_sum=np.zeros(G),
            munu_sum=np.zeros((L, G)),
            inc_sum=np.zeros((L, max(G - 1, 0))),
            inc_sumsq=np.zeros((L, max(G - 1, 0))),
            jump_hist={},
        )

    def merge(self, other: "_ChunkAccum") -> "_ChunkAccum":
        if self.sum_plus is not None:
            self.sum_plus += other.sum_plus
            self.sum_minus += other.sum_minus
        self.n += other.n
        self.obs_sum += other.obs_sum
        self.obs_sumsq += other.obs_sumsq
        self.mu_sum += other.mu_sum
        self.mu_sumsq += other.mu_sumsq
        self.abs_mu_sum += other.abs_mu_sum
        self.munu_sum += other.munu_sum
        self.inc_sum += other.inc_sum
        self.inc_sumsq += other.inc_sumsq
        for k, v in other.jump_hist.items():
            self.jump_hist[k] = self.jump_hist.get(k, 0) + v
        return self


def _run_chunk(kernel, psi0, config, prepped, indices, store_rho) -> _ChunkAccum:
    G = len(config.grid)
    d = kernel.dim
    L = kernel.n_channels
    acc = _ChunkAccum.zeros(G, d, len(prepped), L, store_rho)
    for idx in indices:
        rng = _trajectory_rng(config.master_seed, idx)
        try:
            res = simulate(kernel, psi0, config.scheme, rng, config.grid)
        except Exception as exc:  # noqa: BLE001 - reraised with replay info
            raise EnsembleAbort(idx, config.master_seed, exc) from exc
        mus = res.mus
        if store_rho:
            pos = mus > 0
            if np.any(pos):
                acc.sum_plus += np.einsum(
                    "g,gi,gj->gij", np.where(pos, mus, 0.0), res.psis, res.psis.conj()
                )
            if np.any(~pos):
                acc.sum_minus += np.einsum(
                    "g,gi,gj->gij", np.where(pos, 0.0, -mus), res.psis, res.psis.conj()
                )
        if prepped:
            abs2 = res.psis.real ** 2 + res.psis.imag ** 2
            for i, (_, kind, op) in enumerate(prepped):
                if kind == "vector":
                    vals = np.abs(res.psis @ op.conj()) ** 2
                elif kind == "diag":
                    vals = abs2 @ op
                else:
                    vals = np.einsum("gi,ij,gj->g", res.psis.conj(), op, res.psis).real
                x = mus * vals
                acc.obs_sum[i] += x
                acc.obs_sumsq[i] += x * x
        acc.mu_sum += mus
        acc.mu_sumsq += mus * mus
        acc.abs_mu_sum += np.abs(mus)
        munu = mus[None, :] * res.jump_counts.T
        acc.munu_sum += munu
        if G > 1:
            inc = munu[:, 1:] - munu[:, :-1]
            acc.inc_sum += inc
            acc.inc_sumsq += inc * inc
        njumps = int(res.jump_counts[-1].sum())
        acc.jump_hist[njumps] = acc.jump_hist.get(njumps, 0) + 1
        acc.n += 1
    return acc


def _tree_reduce(chunks: list[_ChunkAccum]) -> _ChunkAccum:
    # pairwise reduction in a fixed order: bit-identical for any thread count
    while len(chunks) > 1:
        nxt = []
        for i in range(0, len(chunks), 2):
            if i + 1 < len(chunks):
                nxt.append(chunks[i].merge(chunks[i + 1]))
            else:
                nxt.append(chunks[i])
        chunks = nxt
    return chunks[0]


def run(model: TimeLocalModel, psi0, config: EnsembleConfig) -> EnsembleEstimate:
    """Average ``mu psi psi^+`` and the requested observables over the ensemble.

    Any trajectory failure aborts the whole run with the trajectory index
    and master seed needed to replay it.
    """
    kernel = model if isinstance(model, DriftKernel) else DriftKernel(model)
    psi0 = as_vector(psi0)
    if abs(float(np.linalg.norm(psi0)) - 1.0) > 1e-8:
        raise ValueError("psi0 must be normalized")
    prepped = _prep_observables(config.observables, kernel.dim)
    store_rho = config.store_rho
    if store_rho is None:
        store_rho = kernel.dim <= 64

    M = config.realizations
    starts = list(range(0, M, CHUNK_SIZE))
    chunk_indices = [range(s, min(s + CHUNK_SIZE, M)) for s in starts]
    if config.threads > 1 and len(chunk_indices) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            chunks = list(
                pool.map(
                    lambda ix: _run_chunk(kernel, psi0, config, prepped, ix, store_rho),
                    chunk_indices,
                )
            )
    else:
        chunks = [
            _run_chunk(kernel, psi0, config, prepped, ix, store_rho)
            for ix in chunk_indices
        ]
    acc = _tree_reduce(chunks)

    G = len(config.grid)

    def mean_and_errors(s, s2):
        mean = s / M
        if M > 1:
            var = np.maximum(s2 - s * s / M, 0.0) / (M - 1)
        else:
            var = np.zeros_like(s)
        std = np.sqrt(var)
        return mean, std / np.sqrt(M), std

    obs_mean, obs_stderr, obs_std = mean_and_errors(acc.obs_sum, acc.obs_sumsq)
    mu_mean, mu_stderr, mu_std = mean_and_errors(acc.mu_sum, acc.mu_sumsq)
    inc_mean, inc_stderr, _ = mean_and_errors(acc.inc_sum, acc.inc_sumsq)

    rho_hat = rho_plus = rho_minus = None
    if store_rho:
        rho_plus = acc.sum_plus / M
        rho_minus = acc.sum_minus / M
        rho_hat = rho_plus - rho_minus

    return EnsembleEstimate(
        times=config.grid.copy(),
        realizations=M,
        master_seed=config.master_seed,
        rho_hat=rho_hat,
        rho_plus=rho_plus,
        rho_minus=rho_minus,
        observable_names=[name for name, _, _ in prepped],
        observable_mean=obs_mean,
        observable_stderr=obs_stderr,
        observable_std=obs_std,
        mean_mu=mu_mean,
        stderr_mu=mu_stderr,
        std_mu=mu_std,
        mean_abs_mu=acc.abs_mu_sum / M,
        mean_munu=acc.munu_sum / M,
        inc_mean=inc_mean,
        inc_stderr=inc_stderr,
        jump_histogram=dict(sorted(acc.jump_hist.items())),
    )


def martingale_diagnostic(estimate: EnsembleEstimate) -> float:
    """Largest ``|mean_mu - 1| / stderr_mu`` over the grid.

    Grid points where the weight is exactly one with zero spread (the
    completely positive regime, and always the initial time) contribute
    zero; a nonzero deviation with zero spread would be a genuine
    inconsistency and reports as infinity.
    """
    if estimate.realizations < 100:
        raise ValueError("diagnostic needs at least 100 realizations")
    dev = np.abs(estimate.mean_mu - 1.0)
    ratio = np.zeros_like(dev)
    ok = estimate.stderr_mu > 0
    ratio[ok] = dev[ok] / estimate.stderr_mu[ok]
    ratio[~ok] = np.where(dev[~ok] == 0.0, 0.0, np.inf)
    return float(ratio.max())


@dataclass
class PhotocurrentSeries:
    """Empirical detection rate of one channel, with its reference value."""

    channel: int
    mid_times: np.ndarray
    empirical_rate: np.ndarray
    empirical_stderr: np.ndarray
    reference_rate: np.ndarray | None  # gamma_l Tr(L rho L^+) from the oracle


def photocurrent(estimate: EnsembleEstimate, channel: int,
                 model: TimeLocalModel | None = None,
                 oracle: DensitySeries | None = None) -> PhotocurrentSeries:
    """Rate of change of the weighted jump counter ``E(mu nu_l)``.

    The empirical side is the per-interval increment of the weighted counts
    divided by the interval length.  When the model and an oracle solution
    are supplied, the deterministic value ``gamma_l(t) Tr(L rho_t L^+)`` is
    evaluated at the interval midpoints for comparison.
    """
    L = estimate.mean_munu.shape[0]
    if not (0 <= channel < L):
        raise ValueError(f"channel {channel} out of range")
    dt = np.diff(estimate.times)
    mid = 0.5 * (estimate.times[1:] + estimate.times[:-1])
    emp = estimate.inc_mean[channel] / dt
    err = estimate.inc_stderr[channel] / dt
    ref = None
    if model is not None and oracle is not None:
        ch = model.channels[channel]
        op = dagger(ch.op) @ ch.op
        # Tr(L rho L^+) = Tr(L^+ L rho)
        ex = oracle.expectation(op)
        tr = 0.5 * (ex[1:] + ex[:-1])
        gm = np.array([ch.gamma(t) for t in mid])
        ref = gm * tr
    return PhotocurrentSeries(channel=channel, mid_times=mid, empirical_rate=emp,
                              empirical_stderr=err, reference_rate=ref)


@dataclass
class EnergyBalanceReport:
    mid_times: np.ndarray
    lhs: np.ndarray             # d Tr(H0 rho)/dt from the oracle
    rhs: np.ndarray             # commutator term + sum_l eps_l * empirical rate
    residual: np.ndarray
    stderr: np.ndarray          # statistical error of the rhs
    max_abs_residual: float
    max_ratio: float            # max |residual| / (stderr, where positive)


def energy_balance_check(model: TimeLocalModel, estimate: EnsembleEstimate,
                         oracle: DensitySeries) -> EnergyBalanceReport:
    """Check energy bookkeeping between the oracle and the photocurrents.

    Requires every channel operator to be an eigenoperator of the bare
    Hamiltonian, ``[H0, L] = eps L`` (checked numerically to 1e-10), with
    its energy quantum declared.  The balance compares the oracle-side
    derivative of ``Tr(H0 rho)`` with the commutator power term plus the
    energy-weighted empirical detection rates.
    """
    h0 = model.bare_hamiltonian
    if h0 is None:
        raise ValueError("model has no bare Hamiltonian")
    for j, ch in enumerate(model.channels):
        if ch.energy_quantum is None:
            raise ValueError(f"channel {j} has no energy quantum")
        comm = h0 @ ch.op - ch.op @ h0
        dev = np.abs(comm - ch.energy_quantum * ch.op).max()
        if dev > 1e-10:
            raise ValueError(
                f"channel {j} is not an eigenoperator of the bare Hamiltonian "
                f"(deviation {dev:.2e})"
            )
    if not np.array_equal(oracle.times, estimate.times):
        raise ValueError("oracle and estimate grids differ")

    dt = np.diff(estimate.times)
    mid = 0.5 * (estimate.times[1:] + estimate.times[:-1])
    energy = oracle.expectation(h0)
    lhs = np.diff(energy) / dt

    # commutator power Tr([H0, H_t] rho)/i, averaged over interval endpoints;
    # the trace is purely imaginary for Hermitian inputs, so /i extracts Im
    def comm_power(t, rho):
        h = model.hamiltonian_at(t)
        return float(np.trace((h0 @ h - h @ h0) @ rho).imag)

    power = np.array([
        comm_power(t, rho) for t, rho in zip(estimate.times, oracle.states)
    ])
    rhs = 0.5 * (power[1:] + power[:-1])
    var = np.zeros_like(rhs)
    for j, ch in enumerate(model.channels):
        rate = estimate.inc_mean[j] / dt
        rhs = rhs + ch.energy_quantum * rate
        var = var + (ch.energy_quantum * estimate.inc_stderr[j] / dt) ** 2
    stderr = np.sqrt(var)
    residual = lhs - rhs
    ok = stderr > 0
    ratio = np.abs(residual[ok]) / stderr[ok] if np.any(ok) else np.array([0.0])
    return EnergyBalanceReport(
        mid_times=mid, lhs=lhs, rhs=rhs, residual=residual, stderr=stderr,
        max_abs_residual=float(np.abs(residual).max()),
        max_ratio=float(ratio.max()),
    )


def wp_split_average(estimate: EnsembleEstimate) -> tuple[np.ndarray, np.ndarray]:
    """Positive/negative-part averages whose difference is the estimate.

    Both series are averages of ``max(0, +/-mu) psi psi^+`` and hence
    positive semidefinite up to accumulation roundoff; their difference
    reconstructs ``rho_hat`` exactly because it is computed that way.
    """
    if estimate.rho_plus is None:
        raise ValueError("run the ensemble with store_rho=True")
    return estimate.rho_plus, estimate.rho_minus
