"""Distance and connectivity kernels.

Two redundant routes on purpose:

* :func:`bfs_distance` is a plain queue BFS over one grid, kept as the
  readable reference implementation.
* :func:`flood_distance` / :func:`count_regions` run the same computations
  on a whole batch of grids at once as fixpoint iterations of a
  von-Neumann-neighbourhood max filter, which is where the throughput
  comes from.

Distances are 4-connected step counts; ``UNREACHABLE`` marks cells no
source can reach (and inactive or impassable cells).
"""
from __future__ import annotations

from collections import deque
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

UNREACHABLE = -1

# Cross-shaped footprint on a [batch, row, col] stack. The leading
# singleton axis keeps the filter from mixing neighbouring batch rows.
_CROSS_NO_CENTER = np.array([[[0, 1, 0], [1, 0, 1], [0, 1, 0]]], dtype=bool)

Cell = tuple[int, int]


def _as_batch(a: np.ndarray) -> np.ndarray:
    if a.ndim == 2:
        return a[None]
    if a.ndim == 3:
        return a
    raise ValueError(f"expected [H, W] or [B, H, W], got shape {a.shape}")


# ---------------------------------------------------------------------------
# scalar reference
# ---------------------------------------------------------------------------


def bfs_distance(
    passable: np.ndarray,
    sources: Iterable[Cell],
    *,
    strict: bool = True,
) -> np.ndarray:
    """Multi-source BFS distance field over one ``[H, W]`` passability mask.

    Sources are activated at distance zero whether or not their own cell is
    passable (``strict=False``); with ``strict=True`` an impassable source
    raises. Expansion only ever moves through passable cells.
    """
    passable = np.asarray(passable, dtype=bool)
    if passable.ndim != 2:
        raise ValueError("bfs_distance expects a single [H, W] mask")
    h, w = passable.shape
    dist = np.full((h, w), UNREACHABLE, dtype=np.int32)
    q: deque[Cell] = deque()
    for r, c in sources:
        if not (0 <= r < h and 0 <= c < w):
            raise ValueError(f"source ({r}, {c}) outside the grid")
        if strict and not passable[r, c]:
            raise ValueError(f"source ({r}, {c}) is not passable")
        if dist[r, c] != 0:
            dist[r, c] = 0
            q.append((r, c))
    while q:
        r, c = q.popleft()
        nd = dist[r, c] + 1
        for rr, cc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= rr < h and 0 <= cc < w and passable[rr, cc] and dist[rr, cc] == UNREACHABLE:
                dist[rr, cc] = nd
                q.append((rr, cc))
    return dist


# ---------------------------------------------------------------------------
# batched kernels
# ---------------------------------------------------------------------------


def flood_distance(
    passable: np.ndarray,
    sources: np.ndarray,
    *,
    strict: bool = False,
) -> np.ndarray:
    """Batched multi-source distance transform.

    ``passable`` and ``sources`` are boolean ``[B, H, W]`` (or ``[H, W]``)
    stacks. Each cell starts at activation ``H*W + 1`` if it is a source and
    0 otherwise, then passable cells repeatedly absorb ``max(neighbour) - 1``
    until nothing changes; distance falls out as ``(H*W + 1) - activation``
    with zero-activation cells unreachable. Semantics match running
    :func:`bfs_distance` per batch row (``strict=False``).
    """
    squeeze = np.asarray(passable).ndim == 2
    passable = _as_batch(np.asarray(passable, dtype=bool))
    sources = _as_batch(np.asarray(sources, dtype=bool))
    if passable.shape != sources.shape:
        raise ValueError("passable/sources shapes differ")
    if strict and bool(np.any(sources & ~passable)):
        raise ValueError("source cell is not passable")
    h, w = passable.shape[1:]
    full = np.int32(h * w + 1)
    act = np.where(sources, full, np.int32(0))
    act = _fixpoint_max(act, passable, decrement=1, iters=h * w)
    dist = np.where(act > 0, full - act, np.int32(UNREACHABLE))
    return dist[0] if squeeze else dist


def count_regions(passable: np.ndarray) -> np.ndarray:
    """Number of 4-connected passable regions per batch row.

    Every passable cell is seeded with a unique positive label (its linear
    index plus one) and labels propagate by the same neighbourhood-max
    fixpoint as the distance kernel. A region collapses to its largest seed,
    so the answer is the count of cells that still hold their own seed.
    """
    squeeze = np.asarray(passable).ndim == 2
    passable = _as_batch(np.asarray(passable, dtype=bool))
    b, h, w = passable.shape
    seeds = (np.arange(h * w, dtype=np.int32).reshape(1, h, w) + 1) * passable
    labels = _fixpoint_max(seeds, passable, decrement=0, iters=h * w)
    counts = np.sum((labels == seeds) & passable, axis=(1, 2), dtype=np.int64)
    return counts[0] if squeeze else counts


def _neighbor_and_center_max(a: np.ndarray, out: np.ndarray) -> np.ndarray:
    """max over each cell and its von Neumann neighbours, batched."""
    np.copyto(out, a)
    np.maximum(out[:, 1:, :], a[:, :-1, :], out=out[:, 1:, :])
    np.maximum(out[:, :-1, :], a[:, 1:, :], out=out[:, :-1, :])
    np.maximum(out[:, :, 1:], a[:, :, :-1], out=out[:, :, 1:])
    np.maximum(out[:, :, :-1], a[:, :, 1:], out=out[:, :, :-1])
    return out


def _fixpoint_max(field: np.ndarray, passable: np.ndarray, *, decrement: int, iters: int) -> np.ndarray:
    """Iterate ``field[c] <- max(field[c], max_neighbour(field) - decrement)``
    on passable cells until nothing changes (at most ``iters`` rounds).

    ``decrement=1`` turns activations into BFS wavefronts, ``decrement=0``
    floods region labels. The update is monotone and per-row local, so a
    row that survives one round unchanged is converged and drops out of
    the working set.
    """
    out = field.astype(np.int32, copy=True)
    work = np.arange(out.shape[0])
    cur = out.copy()
    pas = passable
    buf = np.empty_like(cur)
    for _ in range(iters):
        neigh = _neighbor_and_center_max(cur, buf)
        if decrement:
            neigh -= decrement
        np.maximum(neigh, cur, out=neigh)
        np.copyto(neigh, cur, where=~pas)
        changed = (neigh != cur).any(axis=(1, 2))
        if not changed.any():
            break
        out[work] = neigh
        keep = np.flatnonzero(changed)
        if keep.size < work.size:
            work = work[keep]
            cur = neigh[keep]
            pas = pas[keep]
            buf = np.empty_like(cur)
        else:
            cur, buf = neigh, cur
    return out


def nearest_neighbor_read(dist: np.ndarray, big: int) -> np.ndarray:
    """Min over von Neumann neighbours, for endpoint reads off a field."""
    return ndimage.minimum_filter(dist, footprint=_CROSS_NO_CENTER, mode="constant", cval=big)


# ---------------------------------------------------------------------------
# derived queries
# ---------------------------------------------------------------------------


def endpoint_field(dist: np.ndarray) -> np.ndarray:
    """Distance to every cell treated as a path endpoint.

    A passable cell keeps its flood distance; an impassable one is readable
    at one step past its nearest reached neighbour. Unreachable stays
    ``UNREACHABLE``.
    """
    squeeze = np.asarray(dist).ndim == 2
    dist = _as_batch(np.asarray(dist, dtype=np.int32))
    h, w = dist.shape[1:]
    big = np.int32(h * w + 2)
    d = np.where(dist == UNREACHABLE, big, dist)
    via = nearest_neighbor_read(d, int(big)) + 1
    out = np.minimum(d, via)
    out = np.where(out >= big, np.int32(UNREACHABLE), out)
    return out[0] if squeeze else out


def path_length(passable: np.ndarray, src: Cell, dst: Cell) -> int:
    """Steps from ``src`` to ``dst``; either endpoint may sit on an
    impassable tile (entity cells), traversal in between must be passable."""
    passable = np.asarray(passable, dtype=bool)
    if src == dst:
        return 0
    dist = bfs_distance(passable, [src], strict=False)
    f = endpoint_field(dist)
    return int(f[dst])


def approx_diameter(
    rng: np.random.Generator, passable: np.ndarray
) -> tuple[int, tuple[Cell, Cell]]:
    """Double-sweep diameter estimate of the passable subgraph.

    Picks a random passable cell ``x``, walks to the farthest cell ``y``
    from it, then reports the farthest distance from ``y`` (with both
    endpoints). Ties break row-major. No passable cell raises; a single
    passable cell gives zero.
    """
    passable = np.asarray(passable, dtype=bool)
    flat = np.flatnonzero(passable.ravel())
    if flat.size == 0:
        raise ValueError("no passable cell to measure")
    w = passable.shape[1]
    x = int(flat[int(rng.integers(flat.size))])
    d1 = flood_distance(passable, _seed_at(passable.shape, x))
    y = int(np.argmax(d1))
    d2 = flood_distance(passable, _seed_at(passable.shape, y))
    end = int(np.argmax(d2))
    length = int(d2.ravel()[end])
    return length, (divmod(y, w), divmod(end, w))


def _seed_at(shape: Sequence[int], flat_index: int) -> np.ndarray:
    seed = np.zeros(shape, dtype=bool)
    seed.ravel()[flat_index] = True
    return seed
