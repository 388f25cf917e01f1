"""The Cleanup public-goods game.

Ten agents share a map split into a river that accumulates waste and an
orchard of apples. Apples regrow only while river pollution is below a
cutoff fraction; cleaning the river costs the cleaner but benefits
everyone. Agents may also tag each other out with a beam.

Rewards per step: +1 per apple collected, -1 for firing a beam or a clean,
-50 to a tagged agent (who is removed for 25 steps).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Set, Tuple

from . import envcore
from .envcore import Cleaned, StepOutcome
from .errors import InvalidArgumentError
from .grid import Action, GridPos, beam_cells
from .maps import CleanupMapConfig, validate_map
from .rng import Rng

N_ACTIONS = 9  # moves, rotations, beam, stand, clean


@dataclass
class CleanupState:
    """Mutable episode state; single-owner while an episode is running."""

    config: CleanupMapConfig
    waste: Set[GridPos]
    apple_alive: List[bool]
    agent_pos: List[Optional[GridPos]]
    agent_orient: List[int]
    agent_timeout: List[int]
    step_count: int
    rng_waste: Rng
    rng_regrow: Rng
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


def cleanup_reset(seed: int, config: CleanupMapConfig) -> CleanupState:
    """Fresh episode state, deterministic in ``(seed, config)``."""
    validate_map(config)
    root = Rng(seed)
    init = root.stream("init")
    positions, orients = envcore.place_agents(config, init)
    river_list = list(config.river)
    init.shuffle(river_list)
    n_waste = round(config.initial_waste_density * len(river_list))
    return CleanupState(
        config=config,
        waste=set(river_list[:n_waste]),
        apple_alive=[True] * len(config.apples),
        agent_pos=positions,
        agent_orient=orients,
        agent_timeout=[0] * config.n_agents,
        step_count=0,
        rng_waste=root.stream("waste"),
        rng_regrow=root.stream("regrow"),
        rng_respawn=root.stream("respawn"),
    )


def cleanup_waste_fraction(state: CleanupState) -> float:
    """Waste cells as a fraction of river capacity (0.0 for no river)."""
    capacity = len(state.config.river)
    if capacity == 0:
        return 0.0
    return len(state.waste) / capacity


def _fire_clean_beams(state: CleanupState, actions: Sequence[int],
                      tagged_now: set, rewards, events) -> None:
    for i, action in enumerate(actions):
        if action != Action.CLEAN:
            continue
        if state.agent_timeout[i] > 0 or i in tagged_now:
            continue  # removed agents pay nothing and clear nothing
        rewards[i] += envcore.FIRE_COST
        cells = beam_cells(state.grid, state.agent_pos[i],
                           state.agent_orient[i], state.config.beam_length)
        cleared = tuple(c for c in cells if c in state.waste)
        state.waste.difference_update(cleared)
        events.append(Cleaned(i, cleared))


def _spawn_waste(state: CleanupState) -> None:
    if state.rng_waste.random() >= state.config.waste_spawn_prob:
        return
    empty = [c for c in state.config.river if c not in state.waste]
    if empty:
        state.waste.add(empty[state.rng_waste.randrange(len(empty))])


def _regrow_apples(state: CleanupState) -> None:
    fraction = cleanup_waste_fraction(state)
    p = state.config.regrowth_p_max * max(
        0.0, 1.0 - fraction / state.config.regrowth_cutoff
    )
    for i, alive in enumerate(state.apple_alive):
        if not alive and state.rng_regrow.random() < p:
            state.apple_alive[i] = True


def cleanup_step(state: CleanupState, actions: Sequence[int]
                 ) -> Tuple[CleanupState, StepOutcome]:
    """Advance one step; mutates and returns ``state``."""
    envcore.require_running(state)
    acts = envcore.check_actions(actions, state.n_agents, N_ACTIONS)
    rewards = [0] * state.n_agents
    events: list = []

    envcore.apply_rotations(state, acts)
    envcore.resolve_moves(state, acts)
    envcore.collect_apples(state, rewards, events)
    tagged_now = envcore.fire_tag_beams(state, acts, rewards, events)
    _fire_clean_beams(state, acts, tagged_now, rewards, events)
    _spawn_waste(state)
    _regrow_apples(state)
    envcore.countdown_timeouts(state, tagged_now, state.rng_respawn)
    state.step_count += 1

    return state, StepOutcome(rewards, events, state.step_count >= state.horizon)
