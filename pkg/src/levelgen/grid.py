"""Grid container and episode-setup operations.

A :class:`TileGrid` is a fixed-capacity ``(height, width)`` tile array plus
two boolean planes. ``active`` marks the cells that belong to the current
(possibly smaller) map; everything outside holds the border tile. ``frozen``
marks cells an editor must not touch: all inactive cells, plus any pinned
("pinpointed") design constraints inside the map.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .tiles import Domain

MIN_SIDE = 3
MAX_SIDE = 16

TILE_DTYPE = np.uint8


@dataclass(frozen=True)
class Shape:
    """Rectangular map size in cells, width x height."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"degenerate shape {self.width}x{self.height}")

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class Pinpoint:
    """A tile pinned to a cell before the episode starts."""

    row: int
    col: int
    tile: int


@dataclass(frozen=True, eq=False)
class TileGrid:
    domain: Domain
    tiles: np.ndarray    # uint8 [H, W]
    active: np.ndarray   # bool  [H, W]
    frozen: np.ndarray   # bool  [H, W]

    def __post_init__(self) -> None:
        if self.tiles.ndim != 2:
            raise ValueError("tiles must be a 2-d array")
        if self.tiles.shape != self.active.shape or self.tiles.shape != self.frozen.shape:
            raise ValueError("tiles/active/frozen shapes differ")

    @property
    def height(self) -> int:
        return int(self.tiles.shape[0])

    @property
    def width(self) -> int:
        return int(self.tiles.shape[1])

    @property
    def max_shape(self) -> Shape:
        return Shape(width=self.width, height=self.height)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TileGrid):
            return NotImplemented
        return (
            self.domain.name == other.domain.name
            and np.array_equal(self.tiles, other.tiles)
            and np.array_equal(self.active, other.active)
            and np.array_equal(self.frozen, other.frozen)
        )

    def copy(self) -> "TileGrid":
        return replace(
            self,
            tiles=self.tiles.copy(),
            active=self.active.copy(),
            frozen=self.frozen.copy(),
        )

    def validate(self) -> None:
        """Raise if any structural invariant is broken."""
        d = self.domain
        inactive = ~self.active
        if not np.all(self.tiles[inactive] == d.border_id):
            raise ValueError("inactive cell holds a non-border tile")
        if np.any(self.tiles[self.active] == d.border_id):
            raise ValueError("active cell holds the border tile")
        if np.any(self.tiles >= d.n_tiles + 1):
            raise ValueError("tile id out of range for domain")
        if not np.all(self.frozen[inactive]):
            raise ValueError("inactive cell is not frozen")


def new_grid(domain: Domain, max_shape: Shape) -> TileGrid:
    """A fully inactive grid at capacity ``max_shape``."""
    h, w = max_shape.height, max_shape.width
    return TileGrid(
        domain=domain,
        tiles=np.full((h, w), domain.border_id, dtype=TILE_DTYPE),
        active=np.zeros((h, w), dtype=bool),
        frozen=np.ones((h, w), dtype=bool),
    )


def sample_shape(rng: np.random.Generator, max_shape: Shape) -> Shape:
    """Draw an episode map shape, each side uniform on [MIN_SIDE, max side].

    Draw order is width then height; both the scalar and the batched
    environment paths rely on this exact sequence.
    """
    if max_shape.width < MIN_SIDE or max_shape.height < MIN_SIDE:
        raise ValueError(f"max shape {max_shape} smaller than {MIN_SIDE}x{MIN_SIDE}")
    w = int(rng.integers(MIN_SIDE, max_shape.width + 1))
    h = int(rng.integers(MIN_SIDE, max_shape.height + 1))
    return Shape(width=w, height=h)


def apply_shape(grid: TileGrid, shape: Shape) -> TileGrid:
    """Activate a ``shape`` rectangle anchored at the top-left corner.

    Active cells are filled with air; everything outside is border and
    frozen. Any previous content is discarded.
    """
    if shape.width > grid.width or shape.height > grid.height:
        raise ValueError(f"shape {shape} exceeds grid capacity {grid.max_shape}")
    d = grid.domain
    tiles = np.full_like(grid.tiles, d.border_id)
    active = np.zeros_like(grid.active)
    active[: shape.height, : shape.width] = True
    tiles[active] = d.tile_id("air")
    return TileGrid(domain=d, tiles=tiles, active=active, frozen=~active)


def init_empty(grid: TileGrid) -> TileGrid:
    """Set every active, unfrozen cell to air."""
    tiles = grid.tiles.copy()
    sel = grid.active & ~grid.frozen
    tiles[sel] = grid.domain.tile_id("air")
    return replace(grid, tiles=tiles)


def normalize_weights(domain: Domain, weights: dict[str, float] | dict[int, float]) -> np.ndarray:
    """Weights keyed by tile name or id -> dense probability vector."""
    vec = np.zeros(domain.n_tiles, dtype=np.float64)
    for key, w in weights.items():
        tid = domain.tile_id(key) if isinstance(key, str) else int(key)
        if not 0 <= tid < domain.n_tiles:
            raise ValueError(f"weight for non-writable tile id {tid}")
        if w < 0:
            raise ValueError(f"negative weight for tile {key!r}")
        vec[tid] = w
    total = float(vec.sum())
    if total <= 0:
        raise ValueError("tile weights sum to zero")
    return vec / total


def init_random(
    rng: np.random.Generator,
    grid: TileGrid,
    weights: dict[str, float] | dict[int, float] | np.ndarray,
) -> TileGrid:
    """Fill active, unfrozen cells i.i.d. from ``weights``.

    The draw covers the full bounding rectangle of the active region in one
    ``rng.choice`` call (frozen cells are drawn and discarded), so the number
    of random variates consumed depends only on the map shape.
    """
    d = grid.domain
    p = weights if isinstance(weights, np.ndarray) else normalize_weights(d, weights)
    rows, cols = np.nonzero(grid.active)
    if rows.size == 0:
        return grid.copy()
    h, w = int(rows.max()) + 1, int(cols.max()) + 1
    draw = rng.choice(d.n_tiles, size=(h, w), p=p).astype(TILE_DTYPE)
    tiles = grid.tiles.copy()
    sel = grid.active & ~grid.frozen
    block = sel[:h, :w]
    tiles[:h, :w][block] = draw[block]
    return replace(grid, tiles=tiles)


def place_pinpoints(
    rng: np.random.Generator,
    grid: TileGrid,
    spec: tuple[str, ...] | tuple[int, ...],
) -> tuple[TileGrid, tuple[Pinpoint, ...]]:
    """Pin ``spec`` tiles onto distinct random free cells and freeze them.

    Candidate cells are the active, unfrozen ones in row-major order; the
    draw is a single without-replacement choice. Tiles are written in the
    order given by ``spec``.
    """
    d = grid.domain
    ids = [d.tile_id(t) if isinstance(t, str) else int(t) for t in spec]
    for tid in ids:
        if d.tile_name(tid) not in d.pivotal:
            raise ValueError(f"tile {d.tile_name(tid)!r} is not pinnable in domain {d.name!r}")
    if not ids:
        return grid.copy(), ()
    flat = np.flatnonzero((grid.active & ~grid.frozen).ravel())
    if flat.size < len(ids):
        raise ValueError(f"{len(ids)} pinpoints requested but only {flat.size} free cells")
    picks = rng.choice(flat.size, size=len(ids), replace=False)
    tiles = grid.tiles.copy()
    frozen = grid.frozen.copy()
    pins = []
    for k, tid in enumerate(ids):
        cell = int(flat[int(picks[k])])
        r, c = divmod(cell, grid.width)
        tiles[r, c] = tid
        frozen[r, c] = True
        pins.append(Pinpoint(row=r, col=c, tile=tid))
    return replace(grid, tiles=tiles, frozen=frozen), tuple(pins)


def pin_cell(grid: TileGrid, row: int, col: int, tile: int | str) -> TileGrid:
    """Pin one tile at an explicit cell (designer edit path)."""
    d = grid.domain
    tid = d.tile_id(tile) if isinstance(tile, str) else int(tile)
    if d.tile_name(tid) not in d.pivotal:
        raise ValueError(f"tile {d.tile_name(tid)!r} is not pinnable in domain {d.name!r}")
    if not (0 <= row < grid.height and 0 <= col < grid.width) or not grid.active[row, col]:
        raise ValueError(f"cell ({row}, {col}) is not inside the active map")
    tiles = grid.tiles.copy()
    frozen = grid.frozen.copy()
    tiles[row, col] = tid
    frozen[row, col] = True
    return replace(grid, tiles=tiles, frozen=frozen)


def unpin_cell(grid: TileGrid, row: int, col: int) -> TileGrid:
    """Release a previously pinned cell. The tile itself stays."""
    if not (0 <= row < grid.height and 0 <= col < grid.width) or not grid.active[row, col]:
        raise ValueError(f"cell ({row}, {col}) is not inside the active map")
    if not grid.frozen[row, col]:
        raise ValueError(f"cell ({row}, {col}) is not pinned")
    frozen = grid.frozen.copy()
    frozen[row, col] = False
    return replace(grid, frozen=frozen)
