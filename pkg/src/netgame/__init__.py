"""Projected gradient play in repeated network games over random networks."""
from .game import (
    Ball, Box, CustomCost, EvaluationError, GameBounds, GameSpec, NotMonotoneError, QuadraticCost,
    derive_bounds, estimate_expected_jacobian, expected_jacobian, game_jacobian, local_aggregates, project,
)
from .network import (
    Bernoulli, Constant, NetworkModel, NetworkRealization, RealizationStream, Uniform,
    effective, expected_effective, sample,
)
from .equilibrium import best_response, epsilon_bar, nash_gap, solve_expected_vi
from .dynamics import (
    AlphaRule, CustomSchedule, SimulationTrace, ThetaRule, play_step, run, run_replications, sgd_step,
    step_size,
)
from .metrics import (
    ConstantsBundle, appendix_checks, constants, fit_rate, instantaneous_regret, mean_square_bound_check,
    regret_bound_check, time_averaged_regret, weighted_distance,
)
from .config import ConfigError, ExperimentConfig, load_config

__version__ = "0.1.0"
