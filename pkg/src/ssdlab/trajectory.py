"""Trajectory dumps: line-delimited JSON, self-contained and replayable.

Line 1 is a manifest carrying the game, seed, policy reference and the full
map config; every following line is one step record. Because episodes are
deterministic in (policy, map, seed), re-simulating from the manifest
reproduces the original file byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import List

from .errors import InvalidArgumentError
from .games import get_game
from .maps import MapConfig, map_from_dict, map_to_dict
from .metrics import EpisodeRecord
from .policies import PolicyRef, build_policy
from .rollout import run_episode

TRAJECTORY_FORMAT = "ssdlab-traj-v1"


def _dump_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def trajectory_lines(game_name: str, map_cfg: MapConfig, policy: PolicyRef,
                     seed: int) -> List[str]:
    """Simulate one episode and render it as dump lines (no newlines)."""
    game = get_game(game_name)
    result = run_episode(game, map_cfg, build_policy(policy, game_name),
                         seed, collect_steps=True)
    manifest = {
        "kind": "manifest",
        "format": TRAJECTORY_FORMAT,
        "game": game_name,
        "seed": seed,
        "policy": policy.record(),
        "map": map_to_dict(map_cfg),
    }
    return [_dump_line(manifest)] + [_dump_line(row) for row in result.steps]


def write_trajectory(path: str | Path, game_name: str, map_cfg: MapConfig,
                     policy: PolicyRef, seed: int) -> None:
    lines = trajectory_lines(game_name, map_cfg, policy, seed)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path) -> dict:
    """Parse and sanity-check the manifest line of a trajectory file."""
    text = Path(path).read_text(encoding="utf-8")
    first = text.split("\n", 1)[0]
    try:
        manifest = json.loads(first)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(
            f"{path}: unparseable manifest at line 1, column {exc.colno}"
        ) from exc
    if manifest.get("kind") != "manifest" or manifest.get("format") != TRAJECTORY_FORMAT:
        raise InvalidArgumentError(f"{path}: not a {TRAJECTORY_FORMAT} file")
    return manifest


def replay_lines(path: str | Path) -> List[str]:
    """Re-simulate the episode recorded at ``path`` from its manifest."""
    manifest = read_manifest(path)
    map_cfg = map_from_dict(manifest["map"])
    policy = PolicyRef.from_record(manifest["policy"])
    return trajectory_lines(manifest["game"], map_cfg, policy,
                            int(manifest["seed"]))


def parse_steps(path: str | Path) -> tuple[dict, List[dict]]:
    """Read every line of a dump; malformed lines raise with their position."""
    rows = []
    manifest = None
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidArgumentError(
                    f"{path}: parse error at line {lineno}, column {exc.colno}"
                ) from exc
            if lineno == 1:
                manifest = record
            else:
                rows.append(record)
    if manifest is None:
        raise InvalidArgumentError(f"{path}: empty trajectory file")
    return manifest, rows


def episode_record_from_dump(path: str | Path) -> EpisodeRecord:
    """Rebuild the metric inputs from a saved dump."""
    manifest, rows = parse_steps(path)
    try:
        n = int(manifest["map"]["n_agents"])
        returns = [0.0] * n
        positive: List[List[int]] = [[] for _ in range(n)]
        active = []
        for row in rows:
            active.append(int(row["active"]))
            for i, reward in enumerate(row["rewards"]):
                returns[i] += reward
                if reward > 0:
                    positive[i].append(int(row["t"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidArgumentError(f"{path}: malformed step record: {exc}") from exc
    return EpisodeRecord(
        returns=tuple(returns),
        positive_reward_times=tuple(tuple(ts) for ts in positive),
        active_counts=tuple(active),
        horizon=len(active),
    )
