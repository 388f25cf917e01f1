"""Machinery shared by both game environments.

A step resolves in fixed phases so trajectories are reproducible:
rotations, moves, apple collection, beams (tag then clean), environment
dynamics (waste / timers), timeout countdown with respawn, step counter.

Move conflicts resolve sequentially by agent index against a live
occupancy set: the lower-indexed agent moves, later agents targeting an
occupied cell stand still. Tag beams all fire against the same snapshot of
agent positions, so two shooters can hit one target in the same step;
agents removed by a tag do not execute a clean in that step.

An agent tagged at step t is off-grid (position ``None``) and acts as
STAND for steps t+1 .. t+25, then reappears at a free spawn cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .errors import InvalidArgumentError
from .grid import Action, Grid, GridPos, MOVE_DELTAS, beam_cells
from .rng import Rng

TAG_REWARD = -50
TAG_TIMEOUT = 25
FIRE_COST = -1
APPLE_REWARD = 1


@dataclass(frozen=True)
class AppleCollected:
    agent: int
    pos: GridPos

    def record(self) -> dict:
        return {"type": "apple", "agent": self.agent, "pos": list(self.pos)}


@dataclass(frozen=True)
class BeamFired:
    agent: int

    def record(self) -> dict:
        return {"type": "beam", "agent": self.agent}


@dataclass(frozen=True)
class Tagged:
    shooter: int
    target: int

    def record(self) -> dict:
        return {"type": "tag", "shooter": self.shooter, "target": self.target}


@dataclass(frozen=True)
class Cleaned:
    agent: int
    cells: Tuple[GridPos, ...]

    def record(self) -> dict:
        return {"type": "clean", "agent": self.agent,
                "cells": [list(c) for c in self.cells]}


Event = AppleCollected | BeamFired | Tagged | Cleaned


@dataclass
class StepOutcome:
    rewards: List[int]
    events: List[Event]
    done: bool


def check_actions(actions: Sequence[int], n_agents: int, n_actions: int) -> List[int]:
    if len(actions) != n_agents:
        raise InvalidArgumentError(
            f"need {n_agents} actions, got {len(actions)}"
        )
    out = []
    for i, a in enumerate(actions):
        value = int(a)
        if not 0 <= value < n_actions:
            raise InvalidArgumentError(
                f"agent {i}: action {a!r} out of range [0, {n_actions})"
            )
        out.append(value)
    return out


def apply_rotations(state, actions: Sequence[int]) -> None:
    for i, action in enumerate(actions):
        if state.agent_timeout[i] > 0:
            continue
        if action == Action.ROTATE_LEFT:
            state.agent_orient[i] = (state.agent_orient[i] - 1) % 4
        elif action == Action.ROTATE_RIGHT:
            state.agent_orient[i] = (state.agent_orient[i] + 1) % 4


def resolve_moves(state, actions: Sequence[int]) -> None:
    occupied = {p for p in state.agent_pos if p is not None}
    for i, action in enumerate(actions):
        if state.agent_timeout[i] > 0 or action not in MOVE_DELTAS:
            continue
        dr, dc = MOVE_DELTAS[Action(action)]
        pos = state.agent_pos[i]
        target = (pos[0] + dr, pos[1] + dc)
        if not state.grid.walkable(target) or target in occupied:
            continue  # blocked moves become a stand, no penalty
        occupied.discard(pos)
        occupied.add(target)
        state.agent_pos[i] = target


def collect_apples(state, rewards: List[int], events: List[Event]) -> List[int]:
    """Award +1 to each active agent standing on an alive apple.

    Returns the indices of the apples collected; the caller applies the
    game-specific consequence (death flag or respawn timer).
    """
    collected = []
    index = state.config.apple_index
    for i, pos in enumerate(state.agent_pos):
        if pos is None:
            continue
        apple = index.get(pos)
        if apple is not None and state.apple_alive[apple]:
            state.apple_alive[apple] = False
            rewards[i] += APPLE_REWARD
            events.append(AppleCollected(i, pos))
            collected.append(apple)
    return collected


def fire_tag_beams(state, actions: Sequence[int], rewards: List[int],
                   events: List[Event]) -> set:
    """Resolve all tag beams simultaneously against the pre-beam snapshot."""
    snapshot = {
        pos: i for i, pos in enumerate(state.agent_pos) if pos is not None
    }
    hits = []
    for i, action in enumerate(actions):
        if state.agent_timeout[i] > 0 or action != Action.BEAM:
            continue
        rewards[i] += FIRE_COST
        events.append(BeamFired(i))
        for cell in beam_cells(state.grid, state.agent_pos[i],
                               state.agent_orient[i], state.config.beam_length):
            target = snapshot.get(cell)
            if target is not None:
                hits.append((i, target))
                break
    tagged = set()
    for shooter, target in hits:
        rewards[target] += TAG_REWARD
        state.agent_timeout[target] = TAG_TIMEOUT
        state.agent_pos[target] = None
        events.append(Tagged(shooter, target))
        tagged.add(target)
    return tagged


def countdown_timeouts(state, tagged_now: set, respawn_rng: Rng) -> None:
    occupied = {p for p in state.agent_pos if p is not None}
    for i in range(state.config.n_agents):
        if state.agent_timeout[i] <= 0 or i in tagged_now:
            continue
        state.agent_timeout[i] -= 1
        if state.agent_timeout[i] == 0:
            free = [s for s in state.config.spawns if s not in occupied]
            if not free:
                state.agent_timeout[i] = 1  # retry next step
                continue
            pos = free[respawn_rng.randrange(len(free))]
            state.agent_pos[i] = pos
            state.agent_orient[i] = respawn_rng.randrange(4)
            occupied.add(pos)


def place_agents(config, init_rng: Rng) -> Tuple[List[Optional[GridPos]], List[int]]:
    spawn_list = list(config.spawns)
    init_rng.shuffle(spawn_list)
    positions: List[Optional[GridPos]] = spawn_list[: config.n_agents]
    orients = [init_rng.randrange(4) for _ in range(config.n_agents)]
    return positions, orients


def require_running(state) -> None:
    if state.step_count >= state.config.horizon:
        raise InvalidArgumentError("episode already finished")
