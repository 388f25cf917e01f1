"""Uniform handle on the two games for evaluation and search code."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from . import cleanup, gathering, maps
from .errors import ConfigError


@dataclass(frozen=True)
class GameSpec:
    name: str
    n_actions: int
    reset: Callable
    step: Callable
    default_map: Callable[[], maps.MapConfig]


GAMES = {
    "cleanup": GameSpec(
        name="cleanup",
        n_actions=cleanup.N_ACTIONS,
        reset=cleanup.cleanup_reset,
        step=cleanup.cleanup_step,
        default_map=maps.default_cleanup_map,
    ),
    "gathering": GameSpec(
        name="gathering",
        n_actions=gathering.N_ACTIONS,
        reset=gathering.gathering_reset,
        step=gathering.gathering_step,
        default_map=maps.default_gathering_map,
    ),
}


def get_game(name: str) -> GameSpec:
    game = GAMES.get(name)
    if game is None:
        raise ConfigError(f"unknown game {name!r}; known: {', '.join(sorted(GAMES))}")
    return game
