"""qunravel: jump-trajectory unraveling of time-local master equations.

The library integrates master equations whose channel weights may take
either sign, both deterministically (a dense RK4 reference integrator) and
stochastically: jump trajectories on the unit sphere carry a scalar weight
process with unit mean, and the weighted ensemble average of the pure-state
projectors reconstructs the density operator.
"""

from .linalg import (
    hermitian_eigenvalues,
    hermitian_part,
    is_hermitian,
    matvec,
    min_eigenvalue,
    outer,
)
from .model import (
    AbsValueRate,
    Channel,
    ConstantRate,
    ConstantScalar,
    CustomRate,
    FuncScalar,
    RatePolicy,
    ShiftedRate,
    TabulatedScalar,
    TimeLocalModel,
    TimeScalar,
    as_time_scalar,
    lgks_rhs,
    validate_model,
)
from .master_eq import DensitySeries, MasterEqError, integrate, min_eigenvalues, trace_drift
from .trajectory import (
    DarkStateJumpError,
    DriftKernel,
    GreenPropagator,
    JumpRecord,
    LinearPath,
    NonFiniteStateError,
    SchemeConfig,
    StepSizeError,
    TrajectoryResult,
    TrajectoryState,
    drift_step,
    green_propagator,
    jump_apply,
    propagate_linear,
    replay_nonlinear,
    simulate,
    step,
    waiting_time_density,
    wp_decompose,
)
from .ensemble import (
    EnsembleAbort,
    EnsembleConfig,
    EnsembleEstimate,
    energy_balance_check,
    martingale_diagnostic,
    photocurrent,
    wp_split_average,
)
from .ensemble import run as run_ensemble
from .models import (
    ChainParams,
    RedfieldParams,
    build_chain,
    build_controllable,
    build_decay,
    build_pbg,
    build_qubit_exchange,
    build_redfield,
    chain_demo_params,
    controllable_demo_params,
    pbg_demo_tables,
    pbg_tables_from_coherence,
    redfield_initial_state,
    redfield_projectors,
)
from .bench import BenchRow, sweep

__version__ = "0.1.0"
