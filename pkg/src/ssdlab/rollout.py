"""Self-play episode execution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

from .envcore import StepOutcome
from .games import GameSpec
from .maps import MapConfig
from .metrics import EpisodeRecord
from .policies import PolicyFn


@dataclass
class EpisodeResult:
    record: EpisodeRecord
    steps: Optional[List[dict]]  # trajectory rows when requested


def run_episode(game: GameSpec, map_cfg: MapConfig, policy: PolicyFn,
                seed: int, collect_steps: bool = False,
                horizon: Optional[int] = None) -> EpisodeResult:
    """Run one self-play episode: every agent queries the same policy.

    ``horizon`` may shorten the episode (smoke tests); metrics then use the
    shortened horizon.
    """
    state = game.reset(seed, map_cfg)
    n = map_cfg.n_agents
    steps = map_cfg.horizon if horizon is None else min(horizon, map_cfg.horizon)

    returns = [0.0] * n
    positive_times: List[List[int]] = [[] for _ in range(n)]
    active_counts: List[int] = []
    rows: Optional[List[dict]] = [] if collect_steps else None

    for t in range(steps):
        active = sum(1 for timeout in state.agent_timeout if timeout == 0)
        active_counts.append(active)
        actions = [policy(state, i) for i in range(n)]
        state, outcome = game.step(state, actions)
        for i, reward in enumerate(outcome.rewards):
            returns[i] += reward
            if reward > 0:
                positive_times[i].append(t)
        if rows is not None:
            rows.append(_step_row(t, actions, outcome, active))

    record = EpisodeRecord(
        returns=tuple(returns),
        positive_reward_times=tuple(tuple(ts) for ts in positive_times),
        active_counts=tuple(active_counts),
        horizon=steps,
    )
    return EpisodeResult(record=record, steps=rows)


def _step_row(t: int, actions, outcome: StepOutcome, active: int) -> dict:
    return {
        "kind": "step",
        "t": t,
        "active": active,
        "actions": [int(a) for a in actions],
        "rewards": list(outcome.rewards),
        "events": [event.record() for event in outcome.events],
    }
