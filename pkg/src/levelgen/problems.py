"""Level-quality metrics, target intervals, and the loss function.

Metrics are integers per level. Path-style metrics can additionally come
back *unreachable*; the loss then charges the full upper target plus one
region's worth of weight instead of an interval distance, so disconnecting
the map is never a shortcut.

Everything here is batched: ``tiles``/``active`` stacks of ``[B, H, W]``
map to per-metric value vectors of length ``B``. The scalar wrappers at
the bottom run the same code with a batch of one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import pathfind
from .grid import Shape, TileGrid
from .tiles import AIR, DOOR, ENEMY, KEY, PLAYER, WALL, Domain

MetricValues = dict[str, np.ndarray]
MetricFlags = dict[str, np.ndarray]
Targets = dict[str, tuple[int, int]]
Weights = dict[str, float]

ENEMY_TARGET = (2, 5)
NEAREST_ENEMY_MIN = 4


@dataclass(frozen=True)
class MetricVector:
    """One level's metrics: integer values plus unreachable flags."""

    values: dict[str, int]
    unreachable: frozenset[str]

    def __getitem__(self, name: str) -> int:
        return self.values[name]


def metric_cap(shape: Shape) -> int:
    """Largest value any metric may target on a map of this shape."""
    return shape.area


def default_targets(domain: Domain, shape: Shape) -> Targets:
    """Per-metric target intervals [lo, hi] for uncontrolled training."""
    cap = metric_cap(shape)
    out: Targets = {}
    for m in domain.metric_names:
        if m in domain.maximize:
            out[m] = (cap, cap)
        elif m == "nearest_enemy":
            out[m] = (NEAREST_ENEMY_MIN, cap)
        elif m == "n_enemy":
            out[m] = ENEMY_TARGET
        else:
            # regions and the one-of-each entity counts
            out[m] = (1, 1)
    return out


def default_weights(domain: Domain) -> Weights:
    return {m: 1.0 for m in domain.metric_names}


def sample_control_targets(
    rng: np.random.Generator,
    domain: Domain,
    shape: Shape,
    controllable: Sequence[str],
) -> Targets:
    """Default targets with each controllable metric pinned to a random
    point target t ~ UniformInt[0, cap].

    Draws happen in the domain's canonical metric order so random streams
    line up between the scalar and batched reset paths.
    """
    targets = default_targets(domain, shape)
    cap = metric_cap(shape)
    unknown = set(controllable) - set(domain.metric_names)
    if unknown:
        raise ValueError(f"unknown controllable metrics {sorted(unknown)} for domain {domain.name!r}")
    for m in domain.metric_names:
        if m in controllable:
            t = int(rng.integers(0, cap + 1))
            targets[m] = (t, t)
    return targets


# ---------------------------------------------------------------------------
# batched metric computation
# ---------------------------------------------------------------------------


def _masked_min(field: np.ndarray, mask: np.ndarray, big: np.int32) -> np.ndarray:
    """Per-row min of ``field`` over ``mask`` cells, ignoring unreachable."""
    ok = mask & (field != pathfind.UNREACHABLE)
    vals = np.where(ok, field, big)
    return np.min(vals, axis=(1, 2))


def compute_metrics_batch(
    domain: Domain,
    tiles: np.ndarray,
    active: np.ndarray,
    rngs: Sequence[np.random.Generator],
) -> tuple[MetricValues, MetricFlags]:
    """Metrics for a stack of levels.

    Returns ``(values, unreachable)``; values are int64 ``[B]`` per metric
    and carry zero where the matching unreachable flag is set. ``rngs``
    supplies one generator per row for the diameter start draw (binary
    only; other domains never consume randomness here).
    """
    tiles = np.asarray(tiles)
    active = np.asarray(active, dtype=bool)
    b, h, w = tiles.shape
    if len(rngs) != b:
        raise ValueError(f"need {b} generators, got {len(rngs)}")
    if domain.name == "binary":
        return _binary_metrics(domain, tiles, active, rngs)
    if domain.name == "maze":
        return _maze_metrics(domain, tiles, active)
    if domain.name == "dungeon":
        return _dungeon_metrics(domain, tiles, active)
    raise ValueError(f"no metrics defined for domain {domain.name!r}")


def _count(tiles: np.ndarray, active: np.ndarray, tile_id: int) -> np.ndarray:
    return np.sum((tiles == tile_id) & active, axis=(1, 2), dtype=np.int64)


def _binary_metrics(
    domain: Domain,
    tiles: np.ndarray,
    active: np.ndarray,
    rngs: Sequence[np.random.Generator],
) -> tuple[MetricValues, MetricFlags]:
    b, h, w = tiles.shape
    passable = (tiles == domain.tile_id(AIR)) & active
    regions = pathfind.count_regions(passable)

    # Double-sweep diameter: one random start draw per row that has any
    # passable cell at all; a sealed map measures zero without drawing.
    flat_pass = passable.reshape(b, h * w)
    counts = flat_pass.sum(axis=1)
    has = counts > 0
    draws = np.zeros(b, dtype=np.int64)
    for i in range(b):
        if has[i]:
            draws[i] = rngs[i].integers(counts[i])
    # index of the draws[i]-th passable cell, row-major
    cum = np.cumsum(flat_pass, axis=1)
    start = np.argmax(cum > draws[:, None], axis=1)
    seeds = np.zeros((b, h * w), dtype=bool)
    seeds[has, start[has]] = True
    seeds = seeds.reshape(b, h, w)
    diameter = np.zeros(b, dtype=np.int64)
    if has.any():
        sub = np.flatnonzero(has)
        d1 = pathfind.flood_distance(passable[sub], seeds[sub])
        y = np.argmax(d1.reshape(sub.size, h * w), axis=1)
        seeds2 = np.zeros((sub.size, h * w), dtype=bool)
        seeds2[np.arange(sub.size), y] = True
        d2 = pathfind.flood_distance(passable[sub], seeds2.reshape(sub.size, h, w))
        diameter[sub] = np.max(d2, axis=(1, 2)).astype(np.int64)

    values = {"diameter": diameter, "regions": regions}
    flags = {m: np.zeros(b, dtype=bool) for m in domain.metric_names}
    return values, flags


def _maze_metrics(
    domain: Domain, tiles: np.ndarray, active: np.ndarray
) -> tuple[MetricValues, MetricFlags]:
    b, h, w = tiles.shape
    big = np.int32(h * w + 2)
    player, door = domain.tile_id(PLAYER), domain.tile_id(DOOR)
    passable = np.isin(tiles, domain.path_passable_ids) & active
    players = (tiles == player) & active
    doors = (tiles == door) & active

    n_player = _count(tiles, active, player)
    n_door = _count(tiles, active, door)
    regions = pathfind.count_regions(np.isin(tiles, domain.region_passable_ids) & active)

    dist = pathfind.flood_distance(passable, players)
    best = _masked_min(dist, doors, big)
    bad = (n_player == 0) | (n_door == 0) | (best >= big)
    path = np.where(bad, 0, best).astype(np.int64)

    values = {"path_length": path, "regions": regions, "n_player": n_player, "n_door": n_door}
    flags = {m: np.zeros(b, dtype=bool) for m in domain.metric_names}
    flags["path_length"] = bad
    return values, flags


def _dungeon_metrics(
    domain: Domain, tiles: np.ndarray, active: np.ndarray
) -> tuple[MetricValues, MetricFlags]:
    b, h, w = tiles.shape
    big = np.int32(h * w + 2)
    ids = {n: domain.tile_id(n) for n in (PLAYER, KEY, DOOR, ENEMY)}
    trav = np.isin(tiles, domain.path_passable_ids) & active
    players = (tiles == ids[PLAYER]) & active
    keys = (tiles == ids[KEY]) & active
    doors = (tiles == ids[DOOR]) & active
    enemies = (tiles == ids[ENEMY]) & active

    counts = {f"n_{n}": _count(tiles, active, ids[n]) for n in (PLAYER, KEY, DOOR, ENEMY)}
    regions = pathfind.count_regions(np.isin(tiles, domain.region_passable_ids) & active)

    # Leg one: players to the nearest key; leg two: any key to the nearest
    # door. Entity cells are endpoints, not corridors, so reads go through
    # the endpoint field.
    from_players = pathfind.endpoint_field(pathfind.flood_distance(trav, players))
    leg1 = _masked_min(from_players, keys, big)
    from_keys = pathfind.endpoint_field(pathfind.flood_distance(trav, keys))
    leg2 = _masked_min(from_keys, doors, big)
    missing = (counts["n_player"] == 0) | (counts["n_key"] == 0) | (counts["n_door"] == 0)
    bad_path = missing | (leg1 >= big) | (leg2 >= big)
    pkd = np.where(bad_path, 0, leg1 + leg2).astype(np.int64)

    near = _masked_min(from_players, enemies, big)
    bad_near = (counts["n_player"] == 0) | (counts["n_enemy"] == 0) | (near >= big)
    nearest = np.where(bad_near, 0, near).astype(np.int64)

    values = {
        "pkd_path": pkd,
        "regions": regions,
        "n_player": counts["n_player"],
        "n_key": counts["n_key"],
        "n_door": counts["n_door"],
        "n_enemy": counts["n_enemy"],
        "nearest_enemy": nearest,
    }
    flags = {m: np.zeros(b, dtype=bool) for m in domain.metric_names}
    flags["pkd_path"] = bad_path
    flags["nearest_enemy"] = bad_near
    return values, flags


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------


def loss_batch(
    domain: Domain,
    values: MetricValues,
    unreachable: MetricFlags,
    lo: Mapping[str, np.ndarray],
    hi: Mapping[str, np.ndarray],
    weights: Weights,
) -> np.ndarray:
    """Weighted sum of interval distances, float64 ``[B]``.

    A metric inside its [lo, hi] interval contributes nothing; outside, the
    distance to the nearest bound. An unreachable metric contributes its
    weighted upper bound plus the regions weight. Terms accumulate in the
    domain's canonical metric order, which keeps the float result
    bit-stable across code paths.
    """
    w_regions = float(weights.get("regions", 0.0))
    total: np.ndarray | None = None
    for m in domain.metric_names:
        wm = float(weights.get(m, 0.0))
        v = values[m].astype(np.float64)
        lo_m = np.asarray(lo[m], dtype=np.float64)
        hi_m = np.asarray(hi[m], dtype=np.float64)
        term = wm * (np.maximum(0.0, lo_m - v) + np.maximum(0.0, v - hi_m))
        if m in domain.path_metrics:
            term = np.where(unreachable[m], wm * hi_m + w_regions, term)
        total = term if total is None else total + term
    assert total is not None
    return total


# ---------------------------------------------------------------------------
# scalar wrappers
# ---------------------------------------------------------------------------


def compute_metrics(
    domain: Domain, grid: TileGrid, rng: np.random.Generator | None = None
) -> MetricVector:
    """Metrics for one level. ``rng`` feeds the binary diameter start draw;
    omit it for domains that need no randomness."""
    if rng is None:
        rng = np.random.default_rng(0)
    values, flags = compute_metrics_batch(domain, grid.tiles[None], grid.active[None], [rng])
    return MetricVector(
        values={m: int(values[m][0]) for m in domain.metric_names},
        unreachable=frozenset(m for m in domain.metric_names if flags[m][0]),
    )


def loss(
    metrics: MetricVector,
    targets: Targets,
    weights: Weights,
    domain: Domain,
) -> float:
    values = {m: np.array([metrics.values[m]], dtype=np.int64) for m in domain.metric_names}
    flags = {
        m: np.array([m in metrics.unreachable], dtype=bool) for m in domain.metric_names
    }
    lo = {m: np.array([targets[m][0]], dtype=np.int64) for m in domain.metric_names}
    hi = {m: np.array([targets[m][1]], dtype=np.int64) for m in domain.metric_names}
    return float(loss_batch(domain, values, flags, lo, hi, weights)[0])
