"""Finite-horizon LQG design, simulation and Monte Carlo verification for
linear systems whose state noise is wide-band or a pointwise delay of the
observation noise."""

from .design import DesignTables, build_design
from .errors import WidebandLqgError
from .experiments import (
    invariance_experiment,
    mc_cost,
    optimality_experiment,
    run_experiment,
    statistical_suites,
)
from .kernels import (
    derive_noise_stats,
    solve_kernels_case1,
    solve_kernels_case2,
    solve_kernels_case3,
)
from .noise import (
    factor_covariance,
    generate_bn,
    generate_delayed_wn,
    make_noise,
    sample_kernel,
    smooth_obs_factor,
    zero_noise,
)
from .problem import (
    Case1Noise,
    Case2Noise,
    Case3Noise,
    DelaySchedule,
    KernelSpec,
    ProblemSpec,
    TimeGrid,
    build_problem,
    make_grid,
    scenario_preset,
)
from .riccati import build_propagators, solve_backward_riccati, step_forward_P
from .simulate import (
    Policy,
    accumulate_cost,
    innovative_noise,
    lemma_diagnostics,
    simulate_closed_loop,
)

__version__ = "0.1.0"
