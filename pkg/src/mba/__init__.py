"""Model broadcasting and assembling: block selection and broadcast power control."""

from .bnb import BnBResult, bnb_select, relaxed_lp
from .core import (
    Library,
    PowerSchedule,
    Scenario,
    ScoreTable,
    SelectionMatrix,
    assembled_score,
    block_latency,
    broadcast_rate,
    evaluate_schedule,
    link_rate,
)
from .errors import (
    ArchitectureError,
    CapacityError,
    ConfigError,
    DomainError,
    InfeasibleBudgetError,
    InfeasibleError,
    MBAError,
    SolverError,
)
from .harness import ExperimentConfig, run_constant_power_mba, run_mba, run_unicast, sweep, verify_lemma1
from .lambertw import lambert_w
from .lp import LinearProgram, round_and_check, solve_lp
from .power import constant_power_schedule, kkt_residuals, optimal_power_control, solve_beta
from .scores import (
    GameConfig,
    UtilityGame,
    build_score_table,
    coalition_value,
    exact_shapley,
    mc_shapley,
    qos_thresholds,
    random_game,
)
from .selection import brute_force_select, greedy_select

__all__ = [
    "BnBResult",
    "bnb_select",
    "relaxed_lp",
    "Library",
    "PowerSchedule",
    "Scenario",
    "ScoreTable",
    "SelectionMatrix",
    "assembled_score",
    "block_latency",
    "broadcast_rate",
    "evaluate_schedule",
    "link_rate",
    "ArchitectureError",
    "CapacityError",
    "ConfigError",
    "DomainError",
    "InfeasibleBudgetError",
    "InfeasibleError",
    "MBAError",
    "SolverError",
    "ExperimentConfig",
    "run_constant_power_mba",
    "run_mba",
    "run_unicast",
    "sweep",
    "verify_lemma1",
    "lambert_w",
    "LinearProgram",
    "round_and_check",
    "solve_lp",
    "constant_power_schedule",
    "kkt_residuals",
    "optimal_power_control",
    "solve_beta",
    "GameConfig",
    "UtilityGame",
    "build_score_table",
    "coalition_value",
    "exact_shapley",
    "mc_shapley",
    "qos_thresholds",
    "random_game",
    "brute_force_select",
    "greedy_select",
]
