"""Coordination helpers and the scripted reference policy families.

Every policy is a callable ``(state, agent_id) -> action`` controlling all
agents in self-play: one function, conditioned on ``agent_id``, so a single
policy can still assign roles, rotate duties, or partition territory.
Policies are built fresh per episode via :func:`build_policy`; replaying an
episode with a fresh instance reproduces the exact action sequence.

Families and their coordination mechanisms:

* ``cleanup-static-threshold``: permanent low-index cleaners, with the
  cleaner head-count tiered on the current waste fraction. High throughput,
  but the fixed cleaners pay the whole cleaning bill.
* ``cleanup-rotation-interleaved``: duty rotation. The role index
  ``(agent_id + step // period) % n`` cycles every agent through a set of
  spatially interleaved cleaner slots, each owning one river slice.
* ``cleanup-two-cleaner-rotation``: a 50-step two-cleaner rotation plus a
  slower rotation of collection zones, with an emergency all-clean mode
  when waste crosses the regrowth cliff.
* ``cleanup-sync-threshold``: no per-agent phase at all; the whole
  population switches between cleaning and collecting on waste-fraction
  thresholds, with hysteresis between them.
* ``gathering-voronoi``: territory partition by multi-source BFS, with
  targets ranked by earliest collection time ``max(walk distance, respawn
  timer)`` and camping next to soon-respawning apples.

None of the reference families ever fires the tag beam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Mapping, Optional, Sequence, Set, Tuple

from .cleanup import cleanup_waste_fraction
from .errors import ConfigError, InvalidArgumentError
from .grid import Action, GridPos, bfs, beam_cells, direction_to_action, manhattan

PolicyFn = Callable[[object, int], int]


# ---------------------------------------------------------------------------
# Helpers (the coordination primitive library)
# ---------------------------------------------------------------------------

def voronoi_zones(state) -> Dict[GridPos, int]:
    """Partition walkable cells by BFS distance to the nearest active agent.

    Ties go to the lower agent id. Timed-out agents are not sources; with
    no active agents the map is empty. Cells unreachable from every active
    agent are absent.
    """
    visited: Dict[GridPos, int] = {}
    queue = []
    for agent in range(state.n_agents):
        if state.agent_timeout[agent] == 0:
            pos = state.agent_pos[agent]
            if pos not in visited:
                visited[pos] = agent
                queue.append(pos)
    head = 0
    grid = state.grid
    while head < len(queue):
        pos = queue[head]
        head += 1
        owner = visited[pos]
        for nxt in grid.neighbors(pos):
            if nxt not in visited:
                visited[nxt] = owner
                queue.append(nxt)
    return visited


def nearest_respawning_apple(state, agent: int, zones: Mapping[GridPos, int],
                             max_timer: int = 10) -> Optional[GridPos]:
    """Best dead apple in this agent's zone respawning within ``max_timer``.

    Candidates are ranked by (respawn timer, Manhattan distance); the first
    minimum in apple order wins. ``None`` when there is no candidate.
    """
    pos = state.agent_pos[agent]
    best = None
    best_t = max_timer + 1
    best_d = math.inf
    for i, apple in enumerate(state.apples):
        if state.apple_alive[i] or zones.get(apple) != agent:
            continue
        t = state.apple_timer[i]
        if t > max_timer:
            continue
        d = manhattan(apple, pos)
        if t < best_t or (t == best_t and d < best_d):
            best, best_t, best_d = apple, t, d
    return best


def get_my_apples(state, agent: int) -> Set[GridPos]:
    """Alive apples in this agent's horizontal row band.

    The grid is split into ``n_agents`` equal-height bands; falls back to
    all alive apples when the band is empty.
    """
    band = state.height / state.n_agents
    lo, hi = agent * band, (agent + 1) * band
    mine: Set[GridPos] = set()
    everything: Set[GridPos] = set()
    for i, apple in enumerate(state.apples):
        if state.apple_alive[i]:
            everything.add(apple)
            if lo <= apple[0] < hi:
                mine.add(apple)
    return mine if mine else everything


def clean_yield(state, pos: GridPos, orient: int) -> int:
    """Waste cells a clean beam from ``(pos, orient)`` would clear."""
    cells = beam_cells(state.grid, pos, orient, state.config.beam_length)
    return sum(1 for c in cells if c in state.waste)


def rotation_role(agent_id: int, step: int, shift: int, n: int,
                  cleaner_count: int) -> bool:
    """Whether ``(agent_id + step // shift) % n`` lands in a cleaner slot.

    Over any window of ``shift * n`` steps every agent id is a cleaner for
    exactly ``cleaner_count * shift`` steps.
    """
    if shift < 1:
        raise InvalidArgumentError(f"shift must be >= 1, got {shift}")
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    if not 0 <= cleaner_count <= n:
        raise InvalidArgumentError(
            f"cleaner_count must be in [0, {n}], got {cleaner_count}"
        )
    return (agent_id + step // shift) % n < cleaner_count


# ---------------------------------------------------------------------------
# Internal movement / targeting machinery shared by the families
# ---------------------------------------------------------------------------

def best_clean_orientation(state, pos: GridPos) -> Tuple[int, int]:
    """(orientation, yield) maximizing clean yield from ``pos``; lowest
    orientation index wins ties."""
    best_o, best_y = 0, -1
    for o in range(4):
        y = clean_yield(state, pos, o)
        if y > best_y:
            best_o, best_y = o, y
    return best_o, best_y


def _rotate_toward(current: int, target: int) -> int:
    if (current + 1) % 4 == target:
        return Action.ROTATE_RIGHT
    return Action.ROTATE_LEFT


def _step_toward(state, pos: GridPos, targets, dist=None, first=None) -> Optional[int]:
    """Move action for the shortest path to the nearest of ``targets``.

    Returns STAND when already on a target and ``None`` when no target is
    reachable. Ties break on (distance, cell) for reproducibility.
    """
    if dist is None:
        dist, first = bfs(state.grid, {pos})
    best = None
    best_d = math.inf
    for cell in targets:
        d = dist.get(cell)
        if d is None:
            continue
        if d < best_d or (d == best_d and cell < best):
            best, best_d = cell, d
    if best is None:
        return None
    if best_d == 0:
        return Action.STAND
    nxt = first[best]
    return direction_to_action(nxt[0] - pos[0], nxt[1] - pos[1])


def _crowd_penalty(cell: GridPos, my_dist: float, others: Sequence[GridPos]) -> int:
    """Number of competing agents strictly closer to ``cell`` than we are."""
    return sum(1 for p in others if manhattan(cell, p) < my_dist)


def _scored_target(state, pos: GridPos, candidates, target_row: float,
                   others: Sequence[GridPos], dist) -> Optional[GridPos]:
    """Minimize ``walk distance + row misfit + 50 * closer competitors``."""
    best = None
    best_score = math.inf
    for cell in candidates:
        d = dist.get(cell)
        if d is None:
            continue
        score = d + abs(cell[0] - target_row) + 50 * _crowd_penalty(cell, d, others)
        if score < best_score or (score == best_score and cell < best):
            best, best_score = cell, score
    return best


def _active_positions(state, role_of, my_id: int, my_role) -> list:
    """Positions of other active agents sharing ``my_role``."""
    out = []
    for j in range(state.n_agents):
        if j == my_id or state.agent_timeout[j] > 0:
            continue
        if role_of(j) == my_role:
            out.append(state.agent_pos[j])
    return out


def _row_slice(height: int, index: int, count: int) -> Tuple[int, int]:
    """Rows [lo, hi) of the ``index``-th of ``count`` horizontal slices."""
    return int(index * height / count), int((index + 1) * height / count)


# ---------------------------------------------------------------------------
# Family (a): static roles with a waste-tiered cleaner count
# ---------------------------------------------------------------------------

def _make_static_threshold(params: Mapping[str, float]) -> PolicyFn:
    scale = params["threshold_scale"]
    tiers = tuple(t * scale for t in (0.35, 0.25, 0.15, 0.05))

    def cleaner_count(state) -> int:
        wf = cleanup_waste_fraction(state)
        n = state.n_agents
        if wf > tiers[0]:
            return n
        if wf > tiers[1]:
            return int(n * 0.7)
        if wf > tiers[2]:
            return int(n * 0.5)
        if wf > tiers[3]:
            return int(n * 0.3)
        return max(1, int(n * 0.2))

    def policy(state, agent_id: int) -> int:
        if state.agent_timeout[agent_id] > 0:
            return Action.STAND
        n = state.n_agents
        count = cleaner_count(state)
        is_cleaner = (agent_id % n) < count
        pos = state.agent_pos[agent_id]
        if is_cleaner:
            best_o, best_y = best_clean_orientation(state, pos)
            if best_y >= 1:
                if state.agent_orient[agent_id] == best_o:
                    return Action.CLEAN
                return _rotate_toward(state.agent_orient[agent_id], best_o)
            target_row = ((agent_id + 0.5) / count) * state.height
            others = _active_positions(
                state, lambda j: (j % n) < count, agent_id, True)
            dist, first = bfs(state.grid, {pos})
            target = _scored_target(state, pos, state.waste, target_row,
                                    others, dist)
        else:
            g_idx = agent_id - count
            n_gatherers = n - count
            target_row = ((g_idx + 0.5) / n_gatherers) * state.height
            others = _active_positions(
                state, lambda j: (j % n) < count, agent_id, False)
            alive = [a for i, a in enumerate(state.apples) if state.apple_alive[i]]
            dist, first = bfs(state.grid, {pos})
            target = _scored_target(state, pos, alive, target_row, others, dist)
        if target is None:
            return Action.STAND
        move = _step_toward(state, pos, [target], dist, first)
        return Action.STAND if move is None else move

    return policy


# ---------------------------------------------------------------------------
# Family (b): rotating, spatially interleaved cleaner slots
# ---------------------------------------------------------------------------

def interleaved_indices(n: int, count: int, offset: int = 1) -> Tuple[int, ...]:
    """``count`` role indices spread evenly around the cycle of ``n``.

    Spreading the cleaner slots keeps the currently on-duty cleaners'
    river slices short walks apart. Defaults reproduce {1, 4, 8} for
    (n=10, count=3).
    """
    out = []
    used = set()
    for k in range(count):
        idx = int(offset + k * n / count + 0.5) % n
        while idx in used:
            idx = (idx + 1) % n
        used.add(idx)
        out.append(idx)
    return tuple(sorted(out))


def _clean_routine(state, agent_id: int, row_lo: int, row_hi: int,
                   fire_at: int) -> int:
    """Shared cleaner movement: fire when the current beam covers at least
    ``fire_at`` waste cells, otherwise rotate or reposition inside the
    assigned river rows."""
    pos = state.agent_pos[agent_id]
    orient = state.agent_orient[agent_id]
    if clean_yield(state, pos, orient) >= fire_at:
        return Action.CLEAN
    best_o, best_y = best_clean_orientation(state, pos)
    if best_y >= fire_at:
        return _rotate_toward(orient, best_o)
    good = []
    strong = []
    for cell in state.config.river:
        if not row_lo <= cell[0] < row_hi or cell in state.waste:
            continue
        _, y = best_clean_orientation(state, cell)
        if y >= fire_at:
            strong.append(cell)
        elif y >= 1:
            good.append(cell)
    dist, first = bfs(state.grid, {pos})
    for targets in (strong, good):
        move = _step_toward(state, pos, targets, dist, first)
        if move is not None:
            return move
    in_slice = [c for c in state.waste if row_lo <= c[0] < row_hi]
    for targets in (in_slice, state.waste):
        move = _step_toward(state, pos, targets, dist, first)
        if move is not None:
            return move
    return Action.STAND


def _banded_gather(state, pos: GridPos, row_lo: int, row_hi: int) -> int:
    banded = [a for i, a in enumerate(state.apples)
              if state.apple_alive[i] and row_lo <= a[0] < row_hi]
    alive = [a for i, a in enumerate(state.apples) if state.apple_alive[i]]
    dist, first = bfs(state.grid, {pos})
    for targets in (banded, alive):
        move = _step_toward(state, pos, targets, dist, first)
        if move is not None:
            return move
    return Action.STAND


def _make_rotation_interleaved(params: Mapping[str, float]) -> PolicyFn:
    period = int(params["period"])
    cleaner_count = int(params["cleaner_count"])

    def policy(state, agent_id: int) -> int:
        if state.agent_timeout[agent_id] > 0:
            return Action.STAND
        n = state.n_agents
        count = min(cleaner_count, n)
        role_idx = (agent_id + state.step_count // period) % n
        cleaners = interleaved_indices(n, count)
        if role_idx in cleaners:
            zone = cleaners.index(role_idx)
            row_lo, row_hi = _row_slice(state.height, zone, count)
            return _clean_routine(state, agent_id, row_lo, row_hi, fire_at=2)
        gatherers = tuple(i for i in range(n) if i not in cleaners)
        g_zone = gatherers.index(role_idx)
        row_lo, row_hi = _row_slice(state.height, g_zone, len(gatherers))
        return _banded_gather(state, state.agent_pos[agent_id], row_lo, row_hi)

    return policy


# ---------------------------------------------------------------------------
# Family (c): two-cleaner rotation with rotating collection zones
# ---------------------------------------------------------------------------

def zone_boundaries(height: int, count: int) -> Tuple[int, ...]:
    return tuple(int(i * height / count) for i in range(count + 1))


def _make_two_cleaner_rotation(params: Mapping[str, float]) -> PolicyFn:
    period = int(params["period"])
    cleaner_count = int(params["cleaner_count"])
    zone_count = int(params["zone_count"])
    zone_period = int(params["zone_period"])
    emergency = params["emergency_cutoff"]
    floor = params["clean_floor"]

    def policy(state, agent_id: int) -> int:
        if state.agent_timeout[agent_id] > 0:
            return Action.STAND
        n = state.n_agents
        step = state.step_count
        wf = cleanup_waste_fraction(state)
        rank = (agent_id + step // period) % n
        is_cleaner = rank < min(cleaner_count, n)
        if wf >= emergency:
            is_cleaner = True  # all hands once waste crosses the cliff
        if is_cleaner and wf > floor:
            half = agent_id % 2
            row_lo, row_hi = _row_slice(state.height, half, 2)
            return _clean_routine(state, agent_id, row_lo, row_hi, fire_at=3)
        bounds = zone_boundaries(state.height, zone_count)
        zone = (agent_id + step // zone_period) % zone_count
        return _banded_gather(state, state.agent_pos[agent_id],
                              bounds[zone], bounds[zone + 1])

    return policy


# ---------------------------------------------------------------------------
# Family (d): synchronized clean/collect switching with hysteresis
# ---------------------------------------------------------------------------

class _SyncThresholdPolicy:
    """Whole-population mode switch on waste thresholds.

    Between the two thresholds the previous mode is retained, so the policy
    carries one bit of per-episode state; a fresh instance (or a replay
    from step 0) reproduces the same trajectory.
    """

    def __init__(self, clean_above: float, collect_below: float):
        self._clean_above = clean_above
        self._collect_below = collect_below
        self._mode = "collect"
        self._mode_step = None

    def _update_mode(self, state) -> None:
        step = state.step_count
        if self._mode_step is not None and step == self._mode_step:
            return
        if self._mode_step is None or step <= self._mode_step or step == 0:
            self._mode = "collect"  # new episode
        wf = cleanup_waste_fraction(state)
        if wf > self._clean_above:
            self._mode = "clean"
        elif wf < self._collect_below:
            self._mode = "collect"
        self._mode_step = step

    def __call__(self, state, agent_id: int) -> int:
        self._update_mode(state)
        if state.agent_timeout[agent_id] > 0:
            return Action.STAND
        row_lo, row_hi = _row_slice(state.height, agent_id, state.n_agents)
        if self._mode == "clean":
            return _clean_routine(state, agent_id, row_lo, row_hi, fire_at=1)
        return _banded_gather(state, state.agent_pos[agent_id], row_lo, row_hi)

    @property
    def mode(self) -> str:
        return self._mode


def _make_sync_threshold(params: Mapping[str, float]) -> PolicyFn:
    return _SyncThresholdPolicy(params["clean_above"], params["collect_below"])


# ---------------------------------------------------------------------------
# Family (e): gathering Voronoi with spatiotemporal targeting
# ---------------------------------------------------------------------------

class _VoronoiGatherPolicy:
    """Territory ownership plus earliest-collection-time targeting.

    Each step: recompute Voronoi zones (shared across the per-agent calls
    via a one-step memo), run a centralized BFS from the agent, and chase
    the zone apple minimizing ``max(walk distance, respawn timer)``. Dead
    apples are waited out from an adjacent cell that is not itself an apple
    spawn point; when the zone is empty, poach the nearest alive apple.
    """

    def __init__(self, camp_max_timer: int):
        self._camp_max_timer = camp_max_timer
        self._zones_key = None
        self._zones = None

    def _zone_map(self, state):
        key = (id(state), state.step_count)
        if key != self._zones_key:
            self._zones = voronoi_zones(state)
            self._zones_key = key
        return self._zones

    def __call__(self, state, agent_id: int) -> int:
        if state.agent_timeout[agent_id] > 0:
            return Action.STAND
        pos = state.agent_pos[agent_id]
        orient = state.agent_orient[agent_id]
        zones = self._zone_map(state)
        spawn_points = set(state.apples)
        dist, first = bfs(state.grid, {pos})

        candidates = []
        for i, apple in enumerate(state.apples):
            if zones.get(apple) != agent_id or apple not in dist:
                continue
            timer = state.apple_timer[i]
            if timer > 0 and timer > self._camp_max_timer:
                continue
            candidates.append((apple, timer, dist[apple]))
        candidates.sort(key=lambda x: (max(x[2], x[1]), x[1], x[2], x[0]))

        for apple, timer, d in candidates:
            if timer == 0:
                if d == 0:
                    return Action.STAND
                nxt = first[apple]
                return direction_to_action(nxt[0] - pos[0], nxt[1] - pos[1], orient)
            camp = None
            camp_d = math.inf
            for cell in state.grid.neighbors(apple):
                if cell in spawn_points or cell not in dist:
                    continue
                if dist[cell] < camp_d or (dist[cell] == camp_d and cell < camp):
                    camp, camp_d = cell, dist[cell]
            if camp is None:
                continue
            if camp == pos:
                return Action.STAND
            nxt = first[camp]
            return direction_to_action(nxt[0] - pos[0], nxt[1] - pos[1], orient)

        alive = [a for i, a in enumerate(state.apples) if state.apple_alive[i]]
        move = _step_toward(state, pos, alive, dist, first)
        return Action.STAND if move is None else move


def _make_voronoi_gather(params: Mapping[str, float]) -> PolicyFn:
    return _VoronoiGatherPolicy(int(params["camp_max_timer"]))


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolicyRef:
    """A policy family name plus concrete parameter values."""

    name: str
    params: Dict[str, float] = field(default_factory=dict)

    def record(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}

    @classmethod
    def from_record(cls, record: dict) -> "PolicyRef":
        try:
            return cls(str(record["name"]),
                       {str(k): v for k, v in dict(record.get("params", {})).items()})
        except (KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"malformed policy record: {exc}") from exc


@dataclass(frozen=True)
class ParamSpec:
    default: float
    low: float
    high: float
    step: float
    integer: bool = True


@dataclass(frozen=True)
class PolicyFamily:
    name: str
    game: str
    params: Dict[str, ParamSpec]
    factory: Callable[[Mapping[str, float]], PolicyFn]
    check: Optional[Callable[[Mapping[str, float]], Optional[str]]] = None


def _check_sync_thresholds(params: Mapping[str, float]) -> Optional[str]:
    if params["collect_below"] >= params["clean_above"]:
        return ("collect_below must be strictly below clean_above, got "
                f"{params['collect_below']} >= {params['clean_above']}")
    return None


REGISTRY: Dict[str, PolicyFamily] = {
    family.name: family
    for family in (
        PolicyFamily(
            name="cleanup-static-threshold",
            game="cleanup",
            params={"threshold_scale": ParamSpec(1.0, 0.25, 2.0, 0.25, integer=False)},
            factory=_make_static_threshold,
        ),
        PolicyFamily(
            name="cleanup-rotation-interleaved",
            game="cleanup",
            params={
                "period": ParamSpec(50, 10, 400, 25),
                "cleaner_count": ParamSpec(3, 1, 9, 1),
            },
            factory=_make_rotation_interleaved,
        ),
        PolicyFamily(
            name="cleanup-two-cleaner-rotation",
            game="cleanup",
            params={
                "period": ParamSpec(50, 10, 400, 25),
                "cleaner_count": ParamSpec(2, 1, 9, 1),
                "zone_count": ParamSpec(5, 1, 10, 1),
                "zone_period": ParamSpec(200, 50, 1000, 50),
                "emergency_cutoff": ParamSpec(0.40, 0.05, 1.0, 0.05, integer=False),
                "clean_floor": ParamSpec(0.04, 0.0, 0.2, 0.02, integer=False),
            },
            factory=_make_two_cleaner_rotation,
        ),
        PolicyFamily(
            name="cleanup-sync-threshold",
            game="cleanup",
            params={
                "clean_above": ParamSpec(0.22, 0.05, 0.9, 0.02, integer=False),
                "collect_below": ParamSpec(0.08, 0.0, 0.5, 0.02, integer=False),
            },
            factory=_make_sync_threshold,
            check=_check_sync_thresholds,
        ),
        PolicyFamily(
            name="gathering-voronoi",
            game="gathering",
            params={"camp_max_timer": ParamSpec(15, 0, 100, 5)},
            factory=_make_voronoi_gather,
        ),
    )
}

ROTATION_FAMILIES = (
    "cleanup-rotation-interleaved",
    "cleanup-two-cleaner-rotation",
    "cleanup-sync-threshold",
)


def default_ref(name: str) -> PolicyRef:
    family = REGISTRY.get(name)
    if family is None:
        raise ConfigError(f"unknown policy family {name!r}")
    return PolicyRef(name, {k: spec.default for k, spec in family.params.items()})


def validate_ref(ref: PolicyRef, game: Optional[str] = None) -> PolicyFamily:
    family = REGISTRY.get(ref.name)
    if family is None:
        known = ", ".join(sorted(REGISTRY))
        raise ConfigError(f"unknown policy family {ref.name!r}; known: {known}")
    if game is not None and family.game != game:
        raise ConfigError(
            f"policy {ref.name!r} is a {family.game} policy, not {game}"
        )
    problems = []
    for key, spec in family.params.items():
        if key not in ref.params:
            problems.append(f"missing parameter {key!r}")
            continue
        value = ref.params[key]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            problems.append(f"parameter {key!r} must be a number")
            continue
        if not spec.low <= value <= spec.high:
            problems.append(
                f"parameter {key!r}={value} outside [{spec.low}, {spec.high}]"
            )
        if spec.integer and value != int(value):
            problems.append(f"parameter {key!r}={value} must be an integer")
    for key in ref.params:
        if key not in family.params:
            problems.append(f"unknown parameter {key!r}")
    if not problems and family.check is not None:
        message = family.check(ref.params)
        if message:
            problems.append(message)
    if problems:
        raise ConfigError(f"invalid {ref.name} parameters: " + "; ".join(problems))
    return family


def build_policy(ref: PolicyRef, game: Optional[str] = None) -> PolicyFn:
    """Fresh per-episode policy instance for ``ref``."""
    family = validate_ref(ref, game)
    return family.factory(ref.params)


def family_names(game: Optional[str] = None) -> Tuple[str, ...]:
    return tuple(sorted(
        name for name, fam in REGISTRY.items()
        if game is None or fam.game == game
    ))
