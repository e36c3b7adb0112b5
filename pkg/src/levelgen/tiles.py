"""Tile vocabularies and the three level-design domains.

Each domain fixes a small writable tile vocabulary. Tile ids are dense,
starting at zero, in the order the vocabulary is declared; one extra
reserved id (``Domain.border_id``) marks out-of-bounds cells and is never
writable by an editing agent.
"""
from __future__ import annotations

from dataclasses import dataclass, field

AIR = "air"
WALL = "wall"
PLAYER = "player"
DOOR = "door"
KEY = "key"
ENEMY = "enemy"
BORDER = "border"

# One printable character per tile, used by the text codec and trace output.
TILE_CHARS: dict[str, str] = {
    AIR: ".",
    WALL: "#",
    PLAYER: "P",
    DOOR: "D",
    KEY: "K",
    ENEMY: "E",
    BORDER: "%",
}


@dataclass(frozen=True)
class Domain:
    """Static description of one editing task.

    tiles:            writable vocabulary; position in the tuple is the tile id
    pivotal:          tiles a designer may pin in place before an episode
    path_passable:    tiles an in-level traveller can walk through
    region_passable:  tiles that count as open space for region counting
    metric_names:     canonical metric order for this domain
    path_metrics:     metrics that can come back unreachable
    maximize:         metrics whose default target is the per-shape cap
    """

    name: str
    tiles: tuple[str, ...]
    pivotal: tuple[str, ...]
    path_passable: tuple[str, ...]
    region_passable: tuple[str, ...]
    metric_names: tuple[str, ...]
    path_metrics: tuple[str, ...]
    maximize: tuple[str, ...]
    default_init_mode: str
    default_init_weights: dict[str, float] = field(repr=False)

    def __post_init__(self) -> None:
        if len(set(self.tiles)) != len(self.tiles):
            raise ValueError(f"duplicate tiles in domain {self.name!r}")
        for group in (self.pivotal, self.path_passable, self.region_passable):
            unknown = set(group) - set(self.tiles)
            if unknown:
                raise ValueError(f"unknown tiles {sorted(unknown)} in domain {self.name!r}")

    # -- ids ---------------------------------------------------------------

    @property
    def n_tiles(self) -> int:
        """Writable vocabulary size (excludes the border tile)."""
        return len(self.tiles)

    @property
    def border_id(self) -> int:
        return len(self.tiles)

    @property
    def n_channels_tiles(self) -> int:
        """Tile one-hot planes in an observation, border plane included."""
        return len(self.tiles) + 1

    def tile_id(self, name: str) -> int:
        if name == BORDER:
            return self.border_id
        try:
            return self.tiles.index(name)
        except ValueError:
            raise KeyError(f"domain {self.name!r} has no tile {name!r}") from None

    def tile_name(self, tile_id: int) -> str:
        if tile_id == self.border_id:
            return BORDER
        if 0 <= tile_id < len(self.tiles):
            return self.tiles[tile_id]
        raise KeyError(f"domain {self.name!r} has no tile id {tile_id}")

    def tile_ids(self, names: tuple[str, ...]) -> tuple[int, ...]:
        return tuple(self.tile_id(n) for n in names)

    @property
    def pivotal_ids(self) -> tuple[int, ...]:
        return self.tile_ids(self.pivotal)

    @property
    def path_passable_ids(self) -> tuple[int, ...]:
        return self.tile_ids(self.path_passable)

    @property
    def region_passable_ids(self) -> tuple[int, ...]:
        return self.tile_ids(self.region_passable)

    # -- text --------------------------------------------------------------

    def char_of(self, tile_id: int) -> str:
        return TILE_CHARS[self.tile_name(tile_id)]

    def id_of_char(self, ch: str) -> int:
        for name, c in TILE_CHARS.items():
            if c == ch and (name == BORDER or name in self.tiles):
                return self.tile_id(name)
        raise KeyError(f"domain {self.name!r} has no tile for character {ch!r}")


def _uniform(names: tuple[str, ...]) -> dict[str, float]:
    return {n: 1.0 / len(names) for n in names}


BINARY = Domain(
    name="binary",
    tiles=(AIR, WALL),
    pivotal=(),
    path_passable=(AIR,),
    region_passable=(AIR,),
    metric_names=("diameter", "regions"),
    path_metrics=(),
    maximize=("diameter",),
    default_init_mode="weighted",
    default_init_weights={AIR: 0.5, WALL: 0.5},
)

MAZE = Domain(
    name="maze",
    tiles=(AIR, WALL, PLAYER, DOOR),
    pivotal=(PLAYER, DOOR),
    path_passable=(AIR, PLAYER, DOOR),
    region_passable=(AIR, PLAYER, DOOR),
    metric_names=("path_length", "regions", "n_player", "n_door"),
    path_metrics=("path_length",),
    maximize=("path_length",),
    default_init_mode="empty",
    default_init_weights=_uniform((AIR, WALL, PLAYER, DOOR)),
)

DUNGEON = Domain(
    name="dungeon",
    tiles=(AIR, WALL, ENEMY, KEY, DOOR, PLAYER),
    pivotal=(PLAYER, KEY, DOOR),
    path_passable=(AIR, PLAYER),
    region_passable=(AIR, PLAYER, KEY, DOOR),
    metric_names=(
        "pkd_path",
        "regions",
        "n_player",
        "n_key",
        "n_door",
        "n_enemy",
        "nearest_enemy",
    ),
    path_metrics=("pkd_path", "nearest_enemy"),
    maximize=("pkd_path",),
    default_init_mode="empty",
    default_init_weights=_uniform((AIR, WALL, ENEMY, KEY, DOOR, PLAYER)),
)

DOMAINS: dict[str, Domain] = {d.name: d for d in (BINARY, MAZE, DUNGEON)}


def get_domain(name: str) -> Domain:
    try:
        return DOMAINS[name]
    except KeyError:
        raise KeyError(f"unknown domain {name!r}; expected one of {sorted(DOMAINS)}") from None
