"""Numerical solvers for finite two-player zero-sum stochastic games."""

from .core import GameError, PlayRecord, StochasticGame, builtin_game, validate
from .gamefile import emit_game, load_game, parse_game
from .shapley import ConvergenceError, discounted_value, n_stage_values

__all__ = [
    "ConvergenceError",
    "GameError",
    "PlayRecord",
    "StochasticGame",
    "builtin_game",
    "discounted_value",
    "emit_game",
    "load_game",
    "n_stage_values",
    "parse_game",
    "validate",
]

__version__ = "0.1.0"
