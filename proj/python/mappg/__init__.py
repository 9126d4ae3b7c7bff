from ._core import (
    AssumptionViolation,
    ConfigError,
    DegeneratePolicyError,
    InputError,
    alpha_threshold,
    check_optimality_consistency,
    clipped_coefficient,
    mtq_reward,
    penalty_payoff,
    q_ppg_baseline,
    q_ppg_soft,
    theorem1_sweep,
    train,
)

__all__ = [
    "AssumptionViolation",
    "ConfigError",
    "DegeneratePolicyError",
    "InputError",
    "alpha_threshold",
    "check_optimality_consistency",
    "clipped_coefficient",
    "mtq_reward",
    "penalty_payoff",
    "q_ppg_baseline",
    "q_ppg_soft",
    "theorem1_sweep",
    "train",
]
