"""Plain-text codec for grids.

One character per cell, one line per row::

    .#..
    .#P%

``%`` marks cells outside the active map. When any active cell is frozen
(a pinned design constraint), a mask block follows the tile rows: one line
per row, prefixed with ``!``, using ``*`` for frozen and ``.`` for free.
The mask block is omitted when freezing matches the default (inactive
cells only), so plain levels round-trip to plain text.
"""
from __future__ import annotations

import numpy as np

from .grid import TILE_DTYPE, TileGrid
from .tiles import Domain

MASK_PREFIX = "!"
MASK_FROZEN = "*"
MASK_FREE = "."


def render_text(grid: TileGrid) -> str:
    d = grid.domain
    lines = []
    for r in range(grid.height):
        lines.append("".join(d.char_of(int(t)) for t in grid.tiles[r]))
    if np.any(grid.frozen & grid.active):
        for r in range(grid.height):
            row = "".join(
                MASK_FROZEN if grid.frozen[r, c] else MASK_FREE for c in range(grid.width)
            )
            lines.append(MASK_PREFIX + row)
    return "\n".join(lines) + "\n"


def parse_text(domain: Domain, text: str) -> TileGrid:
    """Inverse of :func:`render_text`.

    Without a mask block, frozen defaults to the inactive cells. Raises
    ``ValueError`` on ragged rows, unknown characters, or a mask that does
    not cover inactive cells.
    """
    raw = [ln for ln in text.splitlines() if ln.strip()]
    tile_lines = [ln for ln in raw if not ln.startswith(MASK_PREFIX)]
    mask_lines = [ln.removeprefix(MASK_PREFIX) for ln in raw if ln.startswith(MASK_PREFIX)]
    if not tile_lines:
        raise ValueError("empty level text")
    width = len(tile_lines[0])
    if width == 0 or any(len(ln) != width for ln in tile_lines):
        raise ValueError("ragged level text")
    height = len(tile_lines)

    tiles = np.empty((height, width), dtype=TILE_DTYPE)
    for r, ln in enumerate(tile_lines):
        for c, ch in enumerate(ln):
            try:
                tiles[r, c] = domain.id_of_char(ch)
            except KeyError as e:
                raise ValueError(str(e)) from None
    active = tiles != domain.border_id

    if mask_lines:
        if len(mask_lines) != height or any(len(ln) != width for ln in mask_lines):
            raise ValueError("frozen mask does not match level dimensions")
        frozen = np.empty((height, width), dtype=bool)
        for r, ln in enumerate(mask_lines):
            for c, ch in enumerate(ln):
                if ch == MASK_FROZEN:
                    frozen[r, c] = True
                elif ch == MASK_FREE:
                    frozen[r, c] = False
                else:
                    raise ValueError(f"bad mask character {ch!r}")
        if np.any(~frozen & ~active):
            raise ValueError("inactive cells must be frozen")
    else:
        frozen = ~active

    grid = TileGrid(domain=domain, tiles=tiles, active=active, frozen=frozen)
    grid.validate()
    return grid
