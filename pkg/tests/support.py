"""Shared test fixtures: tiny maps, hand-built states, independent oracles."""

from __future__ import annotations

import heapq
from types import SimpleNamespace

from ssdlab.cleanup import CleanupState
from ssdlab.games import GameSpec
from ssdlab.gathering import GatheringState
from ssdlab import cleanup as cleanup_mod
from ssdlab import gathering as gathering_mod
from ssdlab.grid import Grid
from ssdlab.maps import CleanupMapConfig, GatheringMapConfig, _cells, validate_map
from ssdlab.rng import Rng


def tiny_cleanup_map(width=5, height=5, n_agents=2, horizon=50, river=(),
                     apples=(), spawns=None, walls=(), **dynamics):
    if spawns is None:
        spawns = [(0, c) for c in range(n_agents)]
    cfg = CleanupMapConfig(
        name="tiny-cleanup", width=width, height=height,
        walls=frozenset(walls), river=_cells(river), apples=_cells(apples),
        spawns=_cells(spawns), n_agents=n_agents, horizon=horizon, **dynamics)
    validate_map(cfg)
    return cfg


def tiny_gathering_map(width=5, height=5, n_agents=2, horizon=50, apples=(),
                       spawns=None, walls=(), **dynamics):
    if spawns is None:
        spawns = [(0, c) for c in range(n_agents)]
    cfg = GatheringMapConfig(
        name="tiny-gathering", width=width, height=height,
        walls=frozenset(walls), apples=_cells(apples), spawns=_cells(spawns),
        n_agents=n_agents, horizon=horizon, **dynamics)
    validate_map(cfg)
    return cfg


def make_cleanup_state(cfg, positions, orients=None, waste=(), dead_apples=(),
                       timeouts=None, step=0, seed=0):
    """Surgically constructed state; positions/orients given explicitly."""
    root = Rng(seed)
    alive = [True] * len(cfg.apples)
    for i in dead_apples:
        alive[i] = False
    return CleanupState(
        config=cfg,
        waste=set(waste),
        apple_alive=alive,
        agent_pos=[tuple(p) if p is not None else None for p in positions],
        agent_orient=list(orients) if orients else [0] * cfg.n_agents,
        agent_timeout=list(timeouts) if timeouts else [0] * cfg.n_agents,
        step_count=step,
        rng_waste=root.stream("waste"),
        rng_regrow=root.stream("regrow"),
        rng_respawn=root.stream("respawn"),
    )


def make_gathering_state(cfg, positions, orients=None, timers=None,
                         timeouts=None, step=0, seed=0):
    root = Rng(seed)
    n = len(cfg.apples)
    timer_list = list(timers) if timers else [0] * n
    return GatheringState(
        config=cfg,
        apple_alive=[t == 0 for t in timer_list],
        apple_timer=timer_list,
        agent_pos=[tuple(p) if p is not None else None for p in positions],
        agent_orient=list(orients) if orients else [0] * cfg.n_agents,
        agent_timeout=list(timeouts) if timeouts else [0] * cfg.n_agents,
        step_count=step,
        rng_respawn=root.stream("respawn"),
    )


def game_for(cfg) -> GameSpec:
    """GameSpec whose default map is ``cfg`` (for harness code paths)."""
    if isinstance(cfg, CleanupMapConfig):
        return GameSpec("cleanup", cleanup_mod.N_ACTIONS,
                        cleanup_mod.cleanup_reset, cleanup_mod.cleanup_step,
                        lambda: cfg)
    return GameSpec("gathering", gathering_mod.N_ACTIONS,
                    gathering_mod.gathering_reset, gathering_mod.gathering_step,
                    lambda: cfg)


def fake_state(grid: Grid, agent_pos, agent_timeout=None, apples=(),
               apple_timer=None, apple_alive=None, waste=(),
               n_agents=None, beam_length=5):
    """Minimal state stand-in for helper-function tests."""
    n = n_agents if n_agents is not None else len(agent_pos)
    apples = tuple(apples)
    return SimpleNamespace(
        grid=grid,
        width=grid.width,
        height=grid.height,
        n_agents=n,
        agent_pos=list(agent_pos),
        agent_timeout=list(agent_timeout) if agent_timeout else [0] * n,
        agent_orient=[0] * n,
        apples=apples,
        apple_alive=(list(apple_alive) if apple_alive is not None
                     else [True] * len(apples)),
        apple_timer=(list(apple_timer) if apple_timer is not None
                     else [0] * len(apples)),
        waste=set(waste),
        step_count=0,
        config=SimpleNamespace(beam_length=beam_length,
                               apple_index={p: i for i, p in enumerate(apples)}),
    )


def dijkstra_distances(grid: Grid, source):
    """Independent shortest-path oracle (heap-based, no shared code path
    with the BFS under test)."""
    dist = {source: 0}
    heap = [(0, source)]
    while heap:
        d, pos = heapq.heappop(heap)
        if d > dist.get(pos, float("inf")):
            continue
        for r, c in ((pos[0] - 1, pos[1]), (pos[0] + 1, pos[1]),
                     (pos[0], pos[1] - 1), (pos[0], pos[1] + 1)):
            if not (0 <= r < grid.height and 0 <= c < grid.width):
                continue
            if (r, c) in grid.walls:
                continue
            nd = d + 1
            if nd < dist.get((r, c), float("inf")):
                dist[(r, c)] = nd
                heapq.heappush(heap, (nd, (r, c)))
    return dist


def brute_force_owner(grid: Grid, sources_by_id):
    """Nearest-source map with lower-id tie-break, via the Dijkstra oracle."""
    per_agent = {aid: dijkstra_distances(grid, pos)
                 for aid, pos in sources_by_id}
    owners = {}
    for cell in grid.cells():
        best_d, best_id = float("inf"), None
        for aid, _ in sources_by_id:
            d = per_agent[aid].get(cell, float("inf"))
            if d < best_d or (d == best_d and best_id is not None and aid < best_id):
                best_d, best_id = d, aid
        if best_id is not None and best_d < float("inf"):
            owners[cell] = best_id
    return owners
