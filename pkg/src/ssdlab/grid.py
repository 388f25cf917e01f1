"""Gridworld substrate: coordinates, actions, pathfinding, beam tracing.

Cells are ``(row, col)`` tuples with row 0 at the top. Moves are absolute
(grid-axis) rather than orientation-relative; orientation only determines
the direction of beam and clean fire. Out-of-bounds is treated as wall.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, FrozenSet, Iterable, Set, Tuple

from .errors import InvalidArgumentError

GridPos = Tuple[int, int]


class Action(IntEnum):
    MOVE_NORTH = 0
    MOVE_SOUTH = 1
    MOVE_WEST = 2
    MOVE_EAST = 3
    ROTATE_LEFT = 4
    ROTATE_RIGHT = 5
    BEAM = 6
    STAND = 7
    CLEAN = 8


class Orientation(IntEnum):
    """Facing direction; rotate right is +1 mod 4, rotate left is -1 mod 4."""

    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3


# Unit cell delta for each orientation (beam direction) and each move action.
ORIENT_DELTAS: Dict[int, GridPos] = {
    Orientation.NORTH: (-1, 0),
    Orientation.EAST: (0, 1),
    Orientation.SOUTH: (1, 0),
    Orientation.WEST: (0, -1),
}

MOVE_DELTAS: Dict[int, GridPos] = {
    Action.MOVE_NORTH: (-1, 0),
    Action.MOVE_SOUTH: (1, 0),
    Action.MOVE_WEST: (0, -1),
    Action.MOVE_EAST: (0, 1),
}

_DELTA_TO_MOVE = {delta: action for action, delta in MOVE_DELTAS.items()}


def direction_to_action(dr: int, dc: int, orient: int = 0) -> Action:
    """Map a unit cell delta to the matching absolute move action.

    ``orient`` is accepted for signature compatibility with policies that
    carry their facing around, but absolute moves do not depend on it.
    """
    action = _DELTA_TO_MOVE.get((dr, dc))
    if action is None:
        raise InvalidArgumentError(
            f"delta ({dr}, {dc}) is not a unit 4-neighbor step"
        )
    return action


@dataclass(frozen=True)
class Grid:
    """Bounded rectangle of walkable cells with precomputed adjacency."""

    height: int
    width: int
    walls: FrozenSet[GridPos]
    _neighbors: Dict[GridPos, Tuple[GridPos, ...]] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise InvalidArgumentError("grid dimensions must be positive")
        for r in range(self.height):
            for c in range(self.width):
                if (r, c) in self.walls:
                    continue
                cells = []
                for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                    nr, nc = r + dr, c + dc
                    if 0 <= nr < self.height and 0 <= nc < self.width \
                            and (nr, nc) not in self.walls:
                        cells.append((nr, nc))
                self._neighbors[(r, c)] = tuple(cells)

    def in_bounds(self, pos: GridPos) -> bool:
        return 0 <= pos[0] < self.height and 0 <= pos[1] < self.width

    def walkable(self, pos: GridPos) -> bool:
        return self.in_bounds(pos) and pos not in self.walls

    def neighbors(self, pos: GridPos) -> Tuple[GridPos, ...]:
        return self._neighbors.get(pos, ())

    def cells(self) -> Iterable[GridPos]:
        """All walkable cells in row-major order."""
        for r in range(self.height):
            for c in range(self.width):
                if (r, c) not in self.walls:
                    yield (r, c)


def bfs(grid: Grid, sources: Set[GridPos] | Iterable[GridPos]):
    """Multi-source breadth-first search over walkable cells.

    Returns ``(distance, first_step)``. ``distance[pos]`` is the exact
    4-neighbor shortest path length from the nearest source. ``first_step[pos]``
    is the first cell an agent standing on that nearest source would move to
    on a shortest path toward ``pos``; source cells have no first-step entry.
    Unreachable cells are absent from both maps.
    """
    source_list = list(sources)
    if not source_list:
        raise InvalidArgumentError("bfs needs at least one source")
    for pos in source_list:
        if not grid.walkable(pos):
            raise InvalidArgumentError(f"source {pos} is not walkable")

    distance: Dict[GridPos, int] = {}
    first_step: Dict[GridPos, GridPos] = {}
    queue = deque()
    for pos in source_list:
        if pos not in distance:
            distance[pos] = 0
            queue.append(pos)
    while queue:
        pos = queue.popleft()
        d = distance[pos]
        for nxt in grid.neighbors(pos):
            if nxt in distance:
                continue
            distance[nxt] = d + 1
            first_step[nxt] = first_step[pos] if d > 0 else nxt
            queue.append(nxt)
    return distance, first_step


def beam_cells(grid: Grid, pos: GridPos, orient: int, length: int) -> Tuple[GridPos, ...]:
    """Cells covered by a straight beam fired from ``pos`` facing ``orient``.

    The beam starts at the facing-adjacent cell, extends up to ``length``
    cells, and stops at the first wall or the grid edge (the blocked cell is
    not included).
    """
    dr, dc = ORIENT_DELTAS[Orientation(orient)]
    covered = []
    r, c = pos
    for _ in range(length):
        r, c = r + dr, c + dc
        if not grid.walkable((r, c)):
            break
        covered.append((r, c))
    return tuple(covered)


def manhattan(a: GridPos, b: GridPos) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])
