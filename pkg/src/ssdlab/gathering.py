"""The Gathering common-pool game.

Four agents share a patch of apples that respawn on a fixed timer after
being collected. Tag beams work as in Cleanup (-1 shooter, -50 target,
25-step removal); there is no river and no clean action, so the action
space is the eight actions 0..7.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from . import envcore
from .envcore import StepOutcome
from .grid import GridPos
from .maps import GatheringMapConfig, validate_map
from .rng import Rng

N_ACTIONS = 8  # moves, rotations, beam, stand; clean is out of range here


@dataclass
class GatheringState:
    config: GatheringMapConfig
    apple_alive: List[bool]
    apple_timer: List[int]
    agent_pos: List[Optional[GridPos]]
    agent_orient: List[int]
    agent_timeout: List[int]
    step_count: int
    rng_respawn: Rng

    @property
    def grid(self):
        return self.config.grid

    @property
    def width(self) -> int:
        return self.config.width

    @property
    def height(self) -> int:
        return self.config.height

    @property
    def n_agents(self) -> int:
        return self.config.n_agents

    @property
    def horizon(self) -> int:
        return self.config.horizon

    @property
    def apples(self) -> Tuple[GridPos, ...]:
        return self.config.apples


def gathering_reset(seed: int, config: GatheringMapConfig) -> GatheringState:
    """Fresh episode state with every apple alive; deterministic in
    ``(seed, config)``."""
    validate_map(config)
    root = Rng(seed)
    positions, orients = envcore.place_agents(config, root.stream("init"))
    n = len(config.apples)
    return GatheringState(
        config=config,
        apple_alive=[True] * n,
        apple_timer=[0] * n,
        agent_pos=positions,
        agent_orient=orients,
        agent_timeout=[0] * config.n_agents,
        step_count=0,
        rng_respawn=root.stream("respawn"),
    )


def _tick_apple_timers(state: GatheringState, collected_now: Sequence[int]) -> None:
    skip = set(collected_now)
    for i, alive in enumerate(state.apple_alive):
        if alive or i in skip:
            continue
        state.apple_timer[i] -= 1
        if state.apple_timer[i] == 0:
            state.apple_alive[i] = True


def gathering_step(state: GatheringState, actions: Sequence[int]
                   ) -> Tuple[GatheringState, StepOutcome]:
    """Advance one step; mutates and returns ``state``."""
    envcore.require_running(state)
    acts = envcore.check_actions(actions, state.n_agents, N_ACTIONS)
    rewards = [0] * state.n_agents
    events: list = []

    envcore.apply_rotations(state, acts)
    envcore.resolve_moves(state, acts)
    collected = envcore.collect_apples(state, rewards, events)
    for apple in collected:
        state.apple_timer[apple] = state.config.respawn_period
    tagged_now = envcore.fire_tag_beams(state, acts, rewards, events)
    _tick_apple_timers(state, collected)
    envcore.countdown_timeouts(state, tagged_now, state.rng_respawn)
    state.step_count += 1

    return state, StepOutcome(rewards, events, state.step_count >= state.horizon)
