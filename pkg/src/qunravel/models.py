"""Builders for the bundled example systems.

Each builder returns a :class:`~qunravel.model.TimeLocalModel` that passes
:func:`~qunravel.model.validate_model` with an empty report.  Weight
functions are small picklable callables (no lambdas) so models can cross
process boundaries if a caller wants that.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import dagger, hermitian_eigenvalues
from .model import (
    AbsValueRate,
    Channel,
    ConstantScalar,
    FuncScalar,
    ShiftedRate,
    TabulatedScalar,
    TimeLocalModel,
    as_time_scalar,
)

__all__ = [
    "pauli_matrices",
    "sigma_minus",
    "sigma_plus",
    "excited_state",
    "ground_state",
    "site_operator",
    "build_decay",
    "build_qubit_exchange",
    "build_pbg",
    "pbg_tables_from_coherence",
    "pbg_demo_tables",
    "build_controllable",
    "controllable_demo_params",
    "RedfieldParams",
    "redfield_operators",
    "build_redfield",
    "redfield_initial_state",
    "redfield_projectors",
    "ChainParams",
    "ChainPulse",
    "ChainShift",
    "chain_demo_params",
    "build_chain",
]


# -- elementary two-level operators -----------------------------------------

def pauli_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    s1 = np.array([[0, 1], [1, 0]], dtype=complex)
    s2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
    s3 = np.array([[1, 0], [0, -1]], dtype=complex)
    return s1, s2, s3


def sigma_minus() -> np.ndarray:
    """Lowering operator in the (excited, ground) basis: maps e to g."""
    return np.array([[0, 0], [1, 0]], dtype=complex)


def sigma_plus() -> np.ndarray:
    return np.array([[0, 1], [0, 0]], dtype=complex)


def excited_state() -> np.ndarray:
    return np.array([1.0, 0.0], dtype=complex)


def ground_state() -> np.ndarray:
    return np.array([0.0, 1.0], dtype=complex)


def site_operator(op2: np.ndarray, site: int, n_sites: int) -> np.ndarray:
    """Lift a single-qubit operator to site ``site`` of an ``n_sites`` register."""
    if not (0 <= site < n_sites):
        raise ValueError("site index out of range")
    out = np.eye(1, dtype=complex)
    for k in range(n_sites):
        out = np.kron(out, op2 if k == site else np.eye(2, dtype=complex))
    return out


# -- plain amplitude damping -------------------------------------------------

def build_decay(gamma=1.0) -> TimeLocalModel:
    """Two-level amplitude damping: H = 0, one lowering channel."""
    ch = Channel(op=sigma_minus(), gamma=as_time_scalar(gamma),
                 rate_policy=AbsValueRate(), label="lower")
    return TimeLocalModel(2, np.zeros((2, 2), dtype=complex), [ch], label="decay")


def build_qubit_exchange(gamma_minus, gamma_plus) -> TimeLocalModel:
    """Qubit exchanging quanta with its surroundings through both ladder ops.

    The bare Hamiltonian is the excitation number, the channels are its
    eigenoperators with energy quanta -1 (emission) and +1 (absorption), so
    the model is ready for the energy-balance bookkeeping.
    """
    n_op = sigma_plus() @ sigma_minus()
    chans = [
        Channel(op=sigma_minus(), gamma=as_time_scalar(gamma_minus),
                rate_policy=AbsValueRate(), energy_quantum=-1.0, label="emit"),
        Channel(op=sigma_plus(), gamma=as_time_scalar(gamma_plus),
                rate_policy=AbsValueRate(), energy_quantum=+1.0, label="absorb"),
    ]
    return TimeLocalModel(2, n_op, chans, bare_hamiltonian=n_op,
                          label="qubit_exchange")


# -- two-level atom with structured-reservoir rates ---------------------------

class _PbgHamiltonian:
    """H(t) = (lamb_shift(t)/2) |e><e|."""

    def __init__(self, lamb_shift):
        self.lamb_shift = lamb_shift
        self._proj = sigma_plus() @ sigma_minus()

    def __call__(self, t):
        return (0.5 * self.lamb_shift(t)) * self._proj


class _Doubled:
    def __init__(self, fn):
        self.fn = fn
        self.bound = None if fn.bound is None else 2.0 * fn.bound

    def __call__(self, t):
        return 2.0 * self.fn(t)


def build_pbg(lamb_shift, weight) -> TimeLocalModel:
    """Two-level atom with a time-structured emission weight and Lamb shift.

    ``weight`` enters the dissipator in double-commutator normalization, so
    the lowering channel carries ``2 * weight(t)``; the Hamiltonian is
    ``(lamb_shift(t)/2) sigma_+ sigma_-``.  Use
    :func:`pbg_tables_from_coherence` to produce matched inputs from a
    coherence survival amplitude.
    """
    lamb_shift = as_time_scalar(lamb_shift)
    weight = as_time_scalar(weight)
    gamma = _Doubled(weight)
    ch = Channel(op=sigma_minus(), gamma=FuncScalar(gamma, bound=gamma.bound),
                 rate_policy=AbsValueRate(), label="lower")
    return TimeLocalModel(2, _PbgHamiltonian(lamb_shift), [ch], label="pbg")


def pbg_tables_from_coherence(times, c_values) -> tuple[TabulatedScalar, TabulatedScalar]:
    """Invert a sampled coherence amplitude into (lamb_shift, weight) tables.

    Given samples of the amplitude ``c_t`` by which the excited-ground
    coherence survives, returns tabulated functions such that feeding them
    to :func:`build_pbg` reproduces exactly that coherence decay:
    ``lamb_shift = -2 Im(dc/dt / c)`` and ``weight = -Re(dc/dt / c)``.
    Derivatives are taken by central differences on the sample grid.
    """
    times = np.asarray(times, dtype=float)
    c = np.asarray(c_values, dtype=complex)
    if times.shape != c.shape or times.ndim != 1 or len(times) < 3:
        raise ValueError("need matching 1d arrays with at least 3 samples")
    if np.any(np.abs(c) == 0):
        raise ValueError("coherence amplitude must not vanish on the grid")
    dc = np.gradient(c, times)
    ratio = dc / c
    lamb = TabulatedScalar(times, -2.0 * ratio.imag)
    weight = TabulatedScalar(times, -1.0 * ratio.real)
    return lamb, weight


class _DemoWeight:
    """Sign-changing emission weight with a slow envelope."""

    def __call__(self, t):
        return 0.9 * np.sin(1.7 * t) * np.exp(-0.15 * t) + 0.12


class _DemoShift:
    def __call__(self, t):
        return 0.6 * (1.0 - np.cos(2.2 * t))


def pbg_demo_tables(horizon: float = 6.0, samples: int = 2001):
    """Packaged demo inputs: tabulated (lamb_shift, weight) with sign changes."""
    ts = np.linspace(0.0, horizon, samples)
    w = _DemoWeight()
    s = _DemoShift()
    return (
        TabulatedScalar(ts, [s(t) for t in ts]),
        TabulatedScalar(ts, [w(t) for t in ts]),
    )


# -- qubit with three sign-changing unital channels ---------------------------

class TanhWeight:
    """Weight of the form ``-a + b tanh(c t)``."""

    def __init__(self, a: float, b: float, c: float):
        self.a = float(a)
        self.b = float(b)
        self.c = float(c)
        self.bound = abs(self.a) + abs(self.b)

    def __call__(self, t):
        return -self.a + self.b * np.tanh(self.c * t)

    def __repr__(self):
        return f"TanhWeight({self.a}, {self.b}, {self.c})"


def build_controllable(a, b, c) -> TimeLocalModel:
    """Qubit with the three Pauli channels and weights ``-a_l + b_l tanh(c_l t)``.

    Because every Pauli squares to the identity the dissipator takes the
    bare ``sigma rho sigma - rho`` form, and the drift vanishes identically
    on the unit sphere, which the trajectory kernel exploits.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if a.shape != (3,) or b.shape != (3,) or c.shape != (3,):
        raise ValueError("need three coefficients each")
    chans = []
    for ell, op in enumerate(pauli_matrices()):
        w = TanhWeight(a[ell], b[ell], c[ell])
        chans.append(Channel(op=op, gamma=FuncScalar(w, bound=w.bound),
                             rate_policy=AbsValueRate(), label=f"pauli{ell + 1}"))
    return TimeLocalModel(2, np.zeros((2, 2), dtype=complex), chans,
                          label="controllable")


def controllable_demo_params():
    """Reference parameter set: all three weights negative around t = 0."""
    a = (0.5, 1.0, 0.8)
    b = (2.0, 2.0, 2.0)
    c = (np.sqrt(2.0), np.sqrt(3.0), np.sqrt(5.0))
    return a, b, c


# -- two dissipatively coupled qubits (signed constant weights) ---------------

@dataclass(frozen=True)
class RedfieldParams:
    """Coupling constants of the two-qubit model with one negative weight."""

    gamma1: float = 1.0
    gamma2: float = 4.0
    alpha: float = 3.0
    kappa: float = 1.0

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError("gamma1 and gamma2 must be positive")


def redfield_operators(p: RedfieldParams):
    """Hamiltonian, channel operators and weights of the two-qubit model.

    The Hermitian coupling matrix ``B`` is diagonalized (in-house solver) to
    produce collective lowering operators ``L_j = sum_i sigma_-^(i) U_ij``
    with constant weights; the smaller weight is negative for all admissible
    parameters.  Returns a dict with H, the L operators, the weights, U, B,
    and the single-excitation states ``w_j = L_j^+ |gg>``.
    """
    g1, g2, al, ka = p.gamma1, p.gamma2, p.alpha, p.kappa
    A = np.array([
        [al, al + ka / 2 - 1j * (g2 - g1) / 4],
        [al + ka / 2 - 1j * (g1 - g2) / 4, al + ka],
    ])
    B = 0.5 * np.array([
        [g1, (g1 + g2) / 2 - 1j * ka],
        [(g1 + g2) / 2 + 1j * ka, g2],
    ])
    lam, U = hermitian_eigenvalues(B, with_vectors=True)
    if abs(lam[0] - lam[1]) < 1e-14:
        raise ValueError("degenerate coupling matrix")
    s_minus = [site_operator(sigma_minus(), i, 2) for i in range(2)]
    s_plus = [site_operator(sigma_plus(), i, 2) for i in range(2)]
    L = [sum(s_minus[i] * U[i, j] for i in range(2)) for j in range(2)]
    H = sum(A[i, j] * (s_plus[j] @ s_minus[i]) for i in range(2) for j in range(2))
    gg = np.zeros(4, dtype=complex)
    gg[3] = 1.0
    w = [dagger(L[j]) @ gg for j in range(2)]
    return {"H": H, "L": L, "weights": lam, "U": U, "A": A, "B": B,
            "ground": gg, "w": w}


def build_redfield(p: RedfieldParams) -> TimeLocalModel:
    ops = redfield_operators(p)
    chans = [
        Channel(op=ops["L"][j], gamma=ConstantScalar(ops["weights"][j]),
                rate_policy=AbsValueRate(), label=f"collective{j + 1}")
        for j in range(2)
    ]
    return TimeLocalModel(4, ops["H"], chans, label="redfield")


def redfield_initial_state(p: RedfieldParams,
                           populations=(0.2, 0.1, 0.7)) -> np.ndarray:
    """Superposition ``sqrt(p1) w1 + sqrt(p2) w2 + sqrt(p3) g``."""
    ops = redfield_operators(p)
    p1, p2, p3 = populations
    psi = (np.sqrt(p1) * ops["w"][0] + np.sqrt(p2) * ops["w"][1]
           + np.sqrt(p3) * ops["ground"])
    return psi / np.linalg.norm(psi)


def redfield_projectors(p: RedfieldParams):
    """Named projectors onto w1, w2 and the ground state."""
    ops = redfield_operators(p)
    return [
        ("pop_w1", ops["w"][0]),
        ("pop_w2", ops["w"][1]),
        ("pop_ground", ops["ground"]),
    ]


# -- driven qubit chain --------------------------------------------------------

class ChainPulse:
    """Weight ``gamma - 12 exp(-2 t^3) sin^2(15 t)`` dipping negative."""

    def __init__(self, gamma: float):
        self.gamma = float(gamma)
        self.bound = max(abs(self.gamma), abs(self.gamma - 12.0))

    def __call__(self, t):
        return self.gamma - 12.0 * np.exp(-2.0 * t ** 3) * np.sin(15.0 * t) ** 2

    def __repr__(self):
        return f"ChainPulse({self.gamma})"


class ChainShift:
    """Common shift making both paired rates positive when the weight dips.

    Zero while the modulated weight is nonnegative; otherwise
    ``2 gamma_1(t) - delta``, which yields rates ``|gamma_1| + delta`` and
    ``2 (|gamma_1| + delta)`` for the paired lowering/raising channels.
    """

    def __init__(self, gamma1, delta: float):
        self.gamma1 = as_time_scalar(gamma1)
        self.delta = float(delta)
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    def __call__(self, t):
        g = self.gamma1(t)
        if g >= 0.0:
            return 0.0
        return 2.0 * g - self.delta

    def __repr__(self):
        return f"ChainShift(delta={self.delta})"


@dataclass(frozen=True)
class ChainParams:
    """Coupled qubit chain with lowering/raising channels on every site."""

    n_sites: int
    coupling: float = 10.0
    gamma: float = 1.0
    delta: float = 0.5
    gamma1_modulation: object = None  # TimeScalar; None keeps site 1 at gamma

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("need at least two sites")
        if self.gamma <= 0 or self.delta <= 0:
            raise ValueError("gamma and delta must be positive")


def chain_demo_params(n_sites: int) -> ChainParams:
    """Reference chain weights: gamma = (1 + 0.063)/0.129, delta = 0.063/0.129,
    hopping 10, site-1 lowering weight modulated by a sign-changing pulse."""
    gamma = (1.0 / 0.129) * (1.0 + 0.063)
    delta = 0.063 / 0.129
    return ChainParams(n_sites=n_sites, coupling=10.0, gamma=gamma, delta=delta,
                       gamma1_modulation=ChainPulse(gamma))


def build_chain(p: ChainParams) -> TimeLocalModel:
    """Nearest-neighbor hopping chain with decay and pumping on every site.

    Channels 0..N-1 are site lowering operators with weight ``gamma``
    (site 1 optionally modulated, possibly through negative values) and
    channels N..2N-1 are site raising operators with weight ``delta``.
    When the modulation can turn negative, channels 1 and N+1 share a
    shifted rate policy; since ``sigma_+ sigma_- + sigma_- sigma_+ = 1`` on
    the site, the shift leaves the deterministic drift unchanged on the
    unit sphere while keeping both jump rates strictly positive.
    """
    n = p.n_sites
    dim = 2 ** n
    h = np.zeros((dim, dim), dtype=complex)
    s_minus = [site_operator(sigma_minus(), k, n) for k in range(n)]
    s_plus = [site_operator(sigma_plus(), k, n) for k in range(n)]
    for k in range(n):
        h += s_plus[k] @ s_minus[k]
    for k in range(n - 1):
        h += p.coupling * (s_plus[k] @ s_minus[k + 1] + s_plus[k + 1] @ s_minus[k])

    chans: list[Channel] = []
    modulated = p.gamma1_modulation is not None
    if modulated:
        gamma1 = as_time_scalar(p.gamma1_modulation)
        shift = ChainShift(gamma1, p.delta)
        pol_low = ShiftedRate(shift, partner=n)
        pol_high = ShiftedRate(shift, partner=0)
    for k in range(n):
        if k == 0 and modulated:
            chans.append(Channel(op=s_minus[k], gamma=gamma1,
                                 rate_policy=pol_low, label="lower1"))
        else:
            chans.append(Channel(op=s_minus[k], gamma=ConstantScalar(p.gamma),
                                 rate_policy=AbsValueRate(), label=f"lower{k + 1}"))
    for k in range(n):
        if k == 0 and modulated:
            chans.append(Channel(op=s_plus[k], gamma=ConstantScalar(p.delta),
                                 rate_policy=pol_high, label="raise1"))
        else:
            chans.append(Channel(op=s_plus[k], gamma=ConstantScalar(p.delta),
                                 rate_policy=AbsValueRate(), label=f"raise{k + 1}"))
    return TimeLocalModel(dim, h, chans, label=f"chain{n}")
