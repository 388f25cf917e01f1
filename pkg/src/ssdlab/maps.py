"""Map configurations for the two games, plus file I/O and validation.

A map file is JSON with cell lists as ``[row, col]`` pairs. The packaged
defaults live in ``ssdlab/data`` and are versioned: changing a default map
changes results, so edits must bump ``name``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, FrozenSet, Tuple

from .errors import MapConfigError
from .grid import Grid, GridPos

MAP_FORMAT = "ssdlab-map-v1"

_DATA_DIR = Path(__file__).parent / "data"

CellTuple = Tuple[GridPos, ...]


def _cells(pairs) -> CellTuple:
    return tuple(sorted((int(r), int(c)) for r, c in pairs))


@dataclass(frozen=True)
class CleanupMapConfig:
    """Public-goods game map: a river that silts up and an apple orchard.

    Dynamics constants: each step one uniformly random empty river cell
    gains waste with probability ``waste_spawn_prob``; each dead apple
    independently regrows with probability
    ``regrowth_p_max * max(0, 1 - waste_fraction / regrowth_cutoff)``.
    """

    name: str
    width: int
    height: int
    walls: FrozenSet[GridPos]
    river: CellTuple
    apples: CellTuple
    spawns: CellTuple
    n_agents: int = 10
    horizon: int = 1000
    waste_spawn_prob: float = 0.5
    regrowth_p_max: float = 0.05
    regrowth_cutoff: float = 0.4
    initial_waste_density: float = 0.25
    beam_length: int = 5

    game = "cleanup"

    @cached_property
    def grid(self) -> Grid:
        return Grid(self.height, self.width, self.walls)

    @cached_property
    def river_set(self) -> FrozenSet[GridPos]:
        return frozenset(self.river)

    @cached_property
    def apple_index(self) -> Dict[GridPos, int]:
        return {pos: i for i, pos in enumerate(self.apples)}


@dataclass(frozen=True)
class GatheringMapConfig:
    """Common-pool game map: shared apples on a fixed respawn timer."""

    name: str
    width: int
    height: int
    walls: FrozenSet[GridPos]
    apples: CellTuple
    spawns: CellTuple
    n_agents: int = 4
    horizon: int = 1000
    respawn_period: int = 15
    beam_length: int = 5

    game = "gathering"

    @cached_property
    def grid(self) -> Grid:
        return Grid(self.height, self.width, self.walls)

    @cached_property
    def apple_index(self) -> Dict[GridPos, int]:
        return {pos: i for i, pos in enumerate(self.apples)}


MapConfig = CleanupMapConfig | GatheringMapConfig


def _check_common(cfg: MapConfig, errors: list) -> None:
    if cfg.width <= 0 or cfg.height <= 0:
        errors.append("dimensions must be positive")
        return
    in_bounds = lambda p: 0 <= p[0] < cfg.height and 0 <= p[1] < cfg.width
    for label, cells in (("wall", cfg.walls), ("apple", cfg.apples), ("spawn", cfg.spawns)):
        for pos in cells:
            if not in_bounds(pos):
                errors.append(f"{label} cell {pos} out of bounds")
    wallset = set(cfg.walls)
    for label, cells in (("apple", cfg.apples), ("spawn", cfg.spawns)):
        overlap = sorted(set(cells) & wallset)
        if overlap:
            errors.append(f"{label} cells {overlap} overlap walls")
        if len(set(cells)) != len(cells):
            errors.append(f"duplicate {label} cells")
    if set(cfg.apples) & set(cfg.spawns):
        errors.append("spawn cells overlap apple cells")
    if len(cfg.spawns) < cfg.n_agents:
        errors.append(
            f"{cfg.n_agents} agents need at least {cfg.n_agents} spawn cells, "
            f"got {len(cfg.spawns)}"
        )
    if cfg.n_agents < 1:
        errors.append("n_agents must be >= 1")
    if cfg.horizon < 1:
        errors.append("horizon must be >= 1")
    if cfg.beam_length < 1:
        errors.append("beam_length must be >= 1")


def validate_map(cfg: MapConfig) -> None:
    """Raise MapConfigError listing every violated constraint."""
    errors: list = []
    _check_common(cfg, errors)
    if isinstance(cfg, CleanupMapConfig):
        wallset = set(cfg.walls)
        river = set(cfg.river)
        if len(river) != len(cfg.river):
            errors.append("duplicate river cells")
        if river & set(cfg.apples):
            errors.append("river and orchard must be disjoint")
        if river & wallset:
            errors.append("river cells overlap walls")
        for pos in cfg.river:
            if not (0 <= pos[0] < cfg.height and 0 <= pos[1] < cfg.width):
                errors.append(f"river cell {pos} out of bounds")
        for prob_name in ("waste_spawn_prob", "regrowth_p_max", "initial_waste_density"):
            value = getattr(cfg, prob_name)
            if not 0.0 <= value <= 1.0:
                errors.append(f"{prob_name} must be in [0, 1], got {value}")
        if not 0.0 < cfg.regrowth_cutoff <= 1.0:
            errors.append(f"regrowth_cutoff must be in (0, 1], got {cfg.regrowth_cutoff}")
    elif isinstance(cfg, GatheringMapConfig):
        if cfg.respawn_period < 1:
            errors.append("respawn_period must be >= 1")
    else:
        errors.append(f"unknown map type {type(cfg)!r}")
    if errors:
        raise MapConfigError("; ".join(str(e) for e in errors))


def map_to_dict(cfg: MapConfig) -> dict:
    record = {
        "format": MAP_FORMAT,
        "game": cfg.game,
        "name": cfg.name,
        "width": cfg.width,
        "height": cfg.height,
        "n_agents": cfg.n_agents,
        "horizon": cfg.horizon,
        "walls": [list(p) for p in sorted(cfg.walls)],
        "apples": [list(p) for p in cfg.apples],
        "spawns": [list(p) for p in cfg.spawns],
    }
    if isinstance(cfg, CleanupMapConfig):
        record["river"] = [list(p) for p in cfg.river]
        record["dynamics"] = {
            "waste_spawn_prob": cfg.waste_spawn_prob,
            "regrowth_p_max": cfg.regrowth_p_max,
            "regrowth_cutoff": cfg.regrowth_cutoff,
            "initial_waste_density": cfg.initial_waste_density,
            "beam_length": cfg.beam_length,
        }
    else:
        record["dynamics"] = {
            "respawn_period": cfg.respawn_period,
            "beam_length": cfg.beam_length,
        }
    return record


def map_from_dict(record: dict) -> MapConfig:
    try:
        game = record["game"]
        common = dict(
            name=record["name"],
            width=int(record["width"]),
            height=int(record["height"]),
            walls=frozenset(_cells(record.get("walls", []))),
            apples=_cells(record.get("apples", [])),
            spawns=_cells(record.get("spawns", [])),
            n_agents=int(record["n_agents"]),
            horizon=int(record["horizon"]),
        )
        dynamics = record.get("dynamics", {})
        if game == "cleanup":
            cfg: MapConfig = CleanupMapConfig(
                river=_cells(record.get("river", [])),
                waste_spawn_prob=float(dynamics.get("waste_spawn_prob", 0.5)),
                regrowth_p_max=float(dynamics.get("regrowth_p_max", 0.05)),
                regrowth_cutoff=float(dynamics.get("regrowth_cutoff", 0.4)),
                initial_waste_density=float(dynamics.get("initial_waste_density", 0.25)),
                beam_length=int(dynamics.get("beam_length", 5)),
                **common,
            )
        elif game == "gathering":
            cfg = GatheringMapConfig(
                respawn_period=int(dynamics.get("respawn_period", 15)),
                beam_length=int(dynamics.get("beam_length", 5)),
                **common,
            )
        else:
            raise MapConfigError(f"unknown game {game!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise MapConfigError(f"malformed map record: {exc}") from exc
    validate_map(cfg)
    return cfg


def save_map(cfg: MapConfig, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(map_to_dict(cfg), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_map(path: str | Path) -> MapConfig:
    try:
        record = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MapConfigError(f"unparseable map file {path}: {exc}") from exc
    return map_from_dict(record)


def build_cleanup_map(
    name: str = "cleanup_custom",
    width: int = 25,
    height: int = 18,
    river_cols: int = 10,
    apple_col_start: int = 12,
    spawn_cols: Tuple[int, int] = (10, 11),
    apple_row_stride: int = 1,
    apple_col_stride: int = 3,
    n_agents: int = 10,
    horizon: int = 1000,
    **dynamics,
) -> CleanupMapConfig:
    """Lay out the canonical cleanup geometry: river on the left columns,
    a spawn strip, and an apple lattice on the right.

    Apples on every row keeps per-row-band collection even, which matters
    for duty-rotation policies that sweep rotating bands.
    """
    river = [(r, c) for r in range(height) for c in range(river_cols)]
    apples = [
        (r, c)
        for r in range(1, height - 1, apple_row_stride)
        for c in range(apple_col_start, width, apple_col_stride)
    ]
    spawns = [(r, c) for r in range(height) for c in spawn_cols]
    cfg = CleanupMapConfig(
        name=name,
        width=width,
        height=height,
        walls=frozenset(),
        river=_cells(river),
        apples=_cells(apples),
        spawns=_cells(spawns),
        n_agents=n_agents,
        horizon=horizon,
        **dynamics,
    )
    validate_map(cfg)
    return cfg


def build_gathering_map(
    name: str = "gathering_custom",
    width: int = 18,
    height: int = 10,
    patch_rows: Tuple[int, int] = (4, 5),
    patch_cols: Tuple[int, int] = (6, 11),
    wall_cols: Tuple[int, ...] = (4, 13),
    wall_rows: Tuple[int, int] = (3, 6),
    n_agents: int = 4,
    horizon: int = 1000,
    **dynamics,
) -> GatheringMapConfig:
    """Symmetric gathering map: central apple patch, corner spawns, and
    short interior wall segments that force BFS detours.

    Even patch dimensions split cleanly into four equal territory
    quadrants; an odd middle row would hand its Voronoi ties to the
    lower-indexed agents and skew equality.
    """
    apples = [
        (r, c)
        for r in range(patch_rows[0], patch_rows[1] + 1)
        for c in range(patch_cols[0], patch_cols[1] + 1)
    ]
    walls = [
        (r, c)
        for c in wall_cols
        for r in range(wall_rows[0], wall_rows[1] + 1)
    ]
    spawns = [(0, 0), (0, width - 1), (height - 1, 0), (height - 1, width - 1)]
    cfg = GatheringMapConfig(
        name=name,
        width=width,
        height=height,
        walls=frozenset(walls),
        apples=_cells(apples),
        spawns=_cells(spawns),
        n_agents=n_agents,
        horizon=horizon,
        **dynamics,
    )
    validate_map(cfg)
    return cfg


def default_cleanup_map() -> CleanupMapConfig:
    return load_map(_DATA_DIR / "cleanup_default.json")  # type: ignore[return-value]


def default_gathering_map() -> GatheringMapConfig:
    return load_map(_DATA_DIR / "gathering_default.json")  # type: ignore[return-value]


def with_overrides(cfg: MapConfig, **kwargs) -> MapConfig:
    """Copy a map with some fields replaced (re-validated)."""
    out = replace(cfg, **kwargs)
    validate_map(out)
    return out
