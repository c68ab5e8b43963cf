"""Multiple-exercise stopping under nonlinear expectations on a lattice."""

from .drivers import (
    Driver,
    SampleGrid,
    eval_driver,
    inf_kappa,
    linear_driver,
    make_driver,
    smooth_inf,
    sup_kappa,
    verify_driver_properties,
    zero_driver,
)
from .engine import (
    MultiStopConfig,
    SnellResult,
    StoppingVector,
    ValueStack,
    check_structural_properties,
    compose_stopping_times,
    convergence_study,
    evaluate_policy,
    extract_policy,
    snell_envelope,
    solve_multiple_auxiliary,
    solve_multiple_direct,
)
from .hjb import (
    ObstacleChain,
    PDEGrid,
    build_next_obstacle,
    build_pde_grid,
    compare_pde_lattice,
    solve_obstacle_chain,
    solve_vi_level,
)
from .lattice import (
    Lattice,
    TimeGrid,
    build_lattice,
    conditional_g_expectation,
    g_step,
    rollback_slice,
)
from .oracle import (
    PathTree,
    build_path_tree,
    closed_form_deterministic,
    drift_shift_value,
    enumerate_multiple_stopping,
)
from .rewards import RewardSpec, RewardSurface, evaluate_reward, load_table
from .config import RunConfig, parse_config

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
