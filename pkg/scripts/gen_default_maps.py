"""Regenerate the packaged default maps.

The JSON files under src/ssdlab/data are the versioned source of truth for
results; rerun this only when deliberately changing a default layout, and
bump the map name when you do.
"""

from pathlib import Path

from ssdlab.maps import build_cleanup_map, build_gathering_map, save_map

DATA = Path(__file__).resolve().parent.parent / "src" / "ssdlab" / "data"


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    cleanup = build_cleanup_map(name="cleanup-default-v1")
    gathering = build_gathering_map(name="gathering-default-v1")
    save_map(cleanup, DATA / "cleanup_default.json")
    save_map(gathering, DATA / "gathering_default.json")
    print(f"cleanup: {cleanup.width}x{cleanup.height}, "
          f"{len(cleanup.river)} river cells, {len(cleanup.apples)} apples, "
          f"{len(cleanup.spawns)} spawns")
    print(f"gathering: {gathering.width}x{gathering.height}, "
          f"{len(gathering.apples)} apples, {len(gathering.walls)} walls")


if __name__ == "__main__":
    main()
