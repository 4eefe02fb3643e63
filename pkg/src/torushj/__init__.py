"""Hamilton-Jacobi solvers on the flat torus.

Non-coercive control-affine Hamiltonians: critical (ergodic) values by
vanishing discount and long-time slopes, correctors and weak KAM fixed points
of the value semigroup, bracket-generation and bounded-time controllability
certification, and periodic homogenization with numerically tabulated
effective Hamiltonians.
"""

from .catalog import (
    OSC_NAMES,
    SBG_TRUE,
    SYSTEM_NAMES,
    OscillatingScenario,
    build_oscillating,
    build_system,
    scenario_defaults,
)
from .config import RunConfig, default_config, load_config
from .critical import (
    CorrectorPair,
    CriticalEstimate,
    WeakKamSolution,
    check_critical_residual,
    corrector_discount,
    estimate_both,
    fixed_point_residuals,
    lambda_discount,
    lambda_longtime,
    weak_kam_fixed_point,
)
from .discounted import DiscountedSolve, residual, solve_discounted
from .errors import (
    ConfigError,
    ControlError,
    ConvergenceError,
    GridError,
    SchemeError,
    TorusHJError,
)
from .geometry import (
    BracketReport,
    TimeTable,
    btc_bound,
    check_sbg,
    lie_bracket,
    minimal_time_table,
)
from .grid import ScalarField, TorusGrid, read_field_csv, wrap, write_field_csv
from .homogenization import (
    EffectiveTable,
    HomogenizationStudy,
    convergence_study,
    effective_hamiltonian,
    effective_initial_data,
    effective_table,
    frozen_data,
    solve_effective_evolutive,
    solve_effective_stationary,
    solve_oscillating_evolutive,
    solve_oscillating_stationary,
)
from .scheme import StepOperator, build_operator, operator_for
from .semigroup import Evolution, evolve, semigroup_step
from .systems import (
    AffineSystem,
    BoundedControl,
    QuadraticControl,
    ball_grid,
    control_samples,
    dynamics,
    hamiltonian,
    lagrangian,
    lipschitz_report,
    optimal_control,
    sigma,
)

__version__ = "0.1.0"
