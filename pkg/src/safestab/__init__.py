"""Safe stabilization of control-affine time-delay systems.

Razumikhin- and Krasovskii-type control Lyapunov and barrier certificates,
a Sontag-type universal controller, sliding-surface controllers that merge
stabilization with safety, a method-of-steps delay integrator and numeric
oracles. See the README for a tour.
"""

from ._kernels import BACKEND, HAVE_NUMBA
from .barrier import (
    BarrierCertificate,
    SafeSetFunction,
    SoftminBarrier,
    barrier_margin,
    invariance_monitor,
    membership,
    sandwich_check,
    softmin_barrier,
)
from .dde import Trajectory, dini_derivative_fd, integrate_closed_loop
from .errors import (
    ContinuityError,
    ContractError,
    DomainError,
    TransversalityError,
    UnsupportedSurfaceError,
)
from .functional import SeparableFunctional, ZeroFunctional
from .history import HistorySegment, advance, integrate, sup_norm, sup_transform
from .lyapunov import (
    KrasovskiiCertificate,
    RazumikhinCertificate,
    decrease_margin,
    domination_controller,
    razumikhin_condition,
    scp_probe,
    sontag_kappa,
    universal_controller,
)
from .oracle import ComparisonInstance, comparison_oracle, reaching_oracle
from .scenarios import (
    CCCParams,
    MasterSlaveParams,
    ScalarParams,
    build_ccc,
    build_master_slave,
    build_scalar,
    metrics,
    run_scenario,
)
from .smc import (
    AdditiveCombiner,
    CustomCombiner,
    GainSpec,
    LinearCombiner,
    SlidingSurface,
    SMCController,
    equivalent_control,
    j_decomposition,
    projection_matrices,
    second_order_surface,
    smc_controller,
    surface_eval,
    surface_terms,
    surface_validity,
)
from .sysmodel import (
    ComparisonFunction,
    ControlAffineDelaySystem,
    check_comparison,
    discrete_delay_system,
    eval_dynamics,
)

__version__ = "0.1.0"
