"""Behavior-regularized model-ensemble RL on desk-scale analytic environments."""

from ._bremen import (
    ConfigError,
    config,
    env_reset,
    env_step,
    gae,
    gaussian_kl_1d,
    gaussian_tv_1d,
    oracle_optimal_return,
    proposition1_bounds,
    return_gap_bound,
    return_gap_penalty,
    run_loop,
    run_offline,
)

__all__ = [
    "ConfigError",
    "config",
    "env_reset",
    "env_step",
    "gae",
    "gaussian_kl_1d",
    "gaussian_tv_1d",
    "oracle_optimal_return",
    "proposition1_bounds",
    "return_gap_bound",
    "return_gap_penalty",
    "run_loop",
    "run_offline",
]
