"""The narrow tile-editing MDP.

An agent walks the map in serpentine scan order. At each cell it may
rewrite the tile under it (or pass); a real change triggers a metric
recompute and pays out the loss improvement as reward. Episodes end after
a step cap or an optional cap on the number of changes.

The batched implementation (:class:`BatchEnv`) owns ``[B, H, W]`` arrays
and steps every environment in lockstep with vectorized kernels. The
scalar functions (:func:`reset`, :func:`step`, ...) run the same code on a
batch of one, so scalar and batched trajectories agree bit for bit when
their random streams match.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Any, Mapping, Sequence

import numpy as np

from . import problems
from .grid import (
    MIN_SIDE,
    Shape,
    TileGrid,
    apply_shape,
    init_empty,
    init_random,
    new_grid,
    normalize_weights,
    pin_cell,
    place_pinpoints,
    sample_shape,
    unpin_cell,
)
from .tiles import Domain, get_domain

NOOP = 0


@dataclass(frozen=True)
class EnvConfig:
    """Static description of one environment family.

    ``max_steps`` defaults to three full passes over the episode's map
    (3 * width * height); ``change_budget`` of ``None`` means unlimited.
    ``deterministic_metrics`` makes the stochastic part of the metrics (the
    diameter start draw) a pure function of an episode seed instead of
    consuming the environment stream, which evaluation and the session
    server rely on for replays.
    """

    domain: str = "binary"
    max_width: int = 16
    max_height: int = 16
    obs_size: int = 31
    randomize_shape: bool = False
    pinpoints: tuple[str, ...] = ()
    controllable: tuple[str, ...] = ()
    init_mode: str | None = None
    init_weights: dict[str, float] | None = None
    max_steps: int | None = None
    change_budget: int | None = None
    loss_weights: dict[str, float] = field(default_factory=dict)
    deterministic_metrics: bool = False

    def __post_init__(self) -> None:
        d = get_domain(self.domain)
        if self.max_width < MIN_SIDE or self.max_height < MIN_SIDE:
            raise ValueError(f"max shape below {MIN_SIDE}x{MIN_SIDE}")
        if self.obs_size < 3:
            raise ValueError("obs_size must be at least 3")
        if self.init_mode not in (None, "weighted", "empty"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        for t in self.pinpoints:
            if t not in d.pivotal:
                raise ValueError(f"tile {t!r} is not pinnable in domain {d.name!r}")
        unknown = set(self.controllable) - set(d.metric_names)
        if unknown:
            raise ValueError(f"unknown controllable metrics {sorted(unknown)}")
        unknown = set(self.loss_weights) - set(d.metric_names)
        if unknown:
            raise ValueError(f"unknown loss weight keys {sorted(unknown)}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.change_budget is not None and self.change_budget < 1:
            raise ValueError("change_budget must be positive")

    @property
    def domain_obj(self) -> Domain:
        return get_domain(self.domain)

    @property
    def max_shape(self) -> Shape:
        return Shape(width=self.max_width, height=self.max_height)

    @property
    def n_actions(self) -> int:
        return self.domain_obj.n_tiles + 1

    def weights(self) -> problems.Weights:
        w = problems.default_weights(self.domain_obj)
        w.update(self.loss_weights)
        return w

    def check_obs_invariant(self) -> None:
        """Training-time bound: the window must not dwarf the map.

        Evaluation intentionally runs large-window models on small maps,
        so this is a separate check rather than part of construction.
        """
        limit = 2 * max(self.max_width, self.max_height) - 1
        if self.obs_size > limit:
            raise ValueError(
                f"obs_size {self.obs_size} exceeds 2*max(width,height)-1 = {limit}"
            )

    def observation_channels(self) -> int:
        return self.domain_obj.n_tiles + 1 + 1 + len(self.control_order())

    def control_order(self) -> tuple[str, ...]:
        d = self.domain_obj
        return tuple(m for m in d.metric_names if m in self.controllable)


@dataclass(frozen=True)
class EnvState:
    """Immutable snapshot of one environment between scalar steps."""

    config: EnvConfig
    grid: TileGrid
    shape: Shape
    pos: tuple[int, int]
    pos_idx: int
    order: np.ndarray
    t: int
    changes: int
    targets: problems.Targets
    metrics: problems.MetricVector
    prev_loss: float
    ep_reward: float
    ep_start_loss: float
    max_steps: int
    rng_state: dict
    metric_seed: int | None
    done: bool


# ---------------------------------------------------------------------------
# scan order
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _serpentine_template(h: int, w: int) -> np.ndarray:
    """Flat cell indices of an h x w grid in boustrophedon order."""
    rows = []
    for r in range(h):
        cols = np.arange(w) if r % 2 == 0 else np.arange(w - 1, -1, -1)
        rows.append(r * w + cols)
    return np.concatenate(rows).astype(np.int32)


@lru_cache(maxsize=None)
def _serpentine_rank(h: int, w: int) -> np.ndarray:
    tmpl = _serpentine_template(h, w)
    rank = np.empty(h * w, dtype=np.int32)
    rank[tmpl] = np.arange(h * w, dtype=np.int32)
    return rank


def scan_order(active: np.ndarray, frozen: np.ndarray) -> np.ndarray:
    """Editable cells (active, unfrozen) as flat indices in scan order."""
    h, w = active.shape
    tmpl = _serpentine_template(h, w)
    editable = (active & ~frozen).ravel()
    return tmpl[editable[tmpl]]


# ---------------------------------------------------------------------------
# observation
# ---------------------------------------------------------------------------


def build_observation(
    domain: Domain,
    tiles: np.ndarray,
    frozen: np.ndarray,
    pos: np.ndarray,
    obs_size: int,
    control: Sequence[str],
    values: Mapping[str, np.ndarray],
    lo: Mapping[str, np.ndarray],
    hi: Mapping[str, np.ndarray],
    caps: np.ndarray,
) -> np.ndarray:
    """Egocentric ``[B, C, O, O]`` float32 windows centred on ``pos``.

    Channels: one plane per writable tile, the border plane, the frozen
    mask, then one broadcast control plane per controlled metric holding
    (value - target) / cap. For even O the centre is biased toward the
    top-left. Cells outside the allocated grid read as border and frozen.
    """
    b, h, w = tiles.shape
    o = obs_size
    half_lo = (o - 1) // 2
    offs = np.arange(o, dtype=np.int64) - half_lo
    rows = pos[:, 0:1] + offs[None, :]
    cols = pos[:, 1:2] + offs[None, :]
    rv = (rows >= 0) & (rows < h)
    cv = (cols >= 0) & (cols < w)
    valid = rv[:, :, None] & cv[:, None, :]
    ri = np.clip(rows, 0, h - 1)
    ci = np.clip(cols, 0, w - 1)
    bi = np.arange(b)[:, None, None]
    win_tiles = tiles[bi, ri[:, :, None], ci[:, None, :]]
    win_tiles = np.where(valid, win_tiles, domain.border_id)
    win_frozen = np.where(valid, frozen[bi, ri[:, :, None], ci[:, None, :]], True)

    n_planes = domain.n_tiles + 1
    planes = (win_tiles[:, None, :, :] == np.arange(n_planes).reshape(1, n_planes, 1, 1))
    chans = [planes.astype(np.float32), win_frozen[:, None].astype(np.float32)]
    if control:
        cap = caps.astype(np.float64)
        ctrl = np.empty((b, len(control)), dtype=np.float64)
        for k, m in enumerate(control):
            target = (lo[m].astype(np.float64) + hi[m].astype(np.float64)) / 2.0
            ctrl[:, k] = (values[m].astype(np.float64) - target) / cap
        chans.append(
            np.broadcast_to(ctrl.astype(np.float32)[:, :, None, None], (b, len(control), o, o)).copy()
        )
    return np.concatenate(chans, axis=1)


# ---------------------------------------------------------------------------
# batched core
# ---------------------------------------------------------------------------


class _Core:
    """Mutable batched environment state plus the transition kernels."""

    def __init__(self, config: EnvConfig, n_envs: int, rngs: Sequence[np.random.Generator]):
        if n_envs < 1:
            raise ValueError("need at least one environment")
        if len(rngs) != n_envs:
            raise ValueError("one generator per environment required")
        self.cfg = config
        self.domain = config.domain_obj
        self.b = n_envs
        self.h = config.max_height
        self.w = config.max_width
        d, b, h, w = self.domain, self.b, self.h, self.w
        self.rngs = list(rngs)
        self.loss_weights = config.weights()
        self.init_probs = normalize_weights(
            d, config.init_weights if config.init_weights else d.default_init_weights
        )
        self.control = config.control_order()

        self.tiles = np.full((b, h, w), d.border_id, dtype=np.uint8)
        self.active = np.zeros((b, h, w), dtype=bool)
        self.frozen = np.ones((b, h, w), dtype=bool)
        self.shape_hw = np.zeros((b, 2), dtype=np.int64)
        self.caps = np.zeros(b, dtype=np.int64)
        self.order = np.full((b, h * w), -1, dtype=np.int32)
        self.order_len = np.zeros(b, dtype=np.int64)
        self.pos_idx = np.zeros(b, dtype=np.int64)
        self.t = np.zeros(b, dtype=np.int64)
        self.changes = np.zeros(b, dtype=np.int64)
        self.max_steps = np.zeros(b, dtype=np.int64)
        self.lo = {m: np.zeros(b, dtype=np.int64) for m in d.metric_names}
        self.hi = {m: np.zeros(b, dtype=np.int64) for m in d.metric_names}
        self.values = {m: np.zeros(b, dtype=np.int64) for m in d.metric_names}
        self.unreach = {m: np.zeros(b, dtype=bool) for m in d.metric_names}
        self.prev_loss = np.zeros(b, dtype=np.float64)
        self.ep_reward = np.zeros(b, dtype=np.float64)
        self.ep_start_loss = np.zeros(b, dtype=np.float64)
        self.metric_seeds = np.zeros(b, dtype=np.int64)

    # -- episode setup ------------------------------------------------------

    def reset_rows(self, idx: np.ndarray) -> None:
        cfg, d = self.cfg, self.domain
        for i in idx:
            i = int(i)
            gen = self.rngs[i]
            shape = (
                Shape(width=self.w, height=self.h)
                if not cfg.randomize_shape
                else sample_shape(gen, cfg.max_shape)
            )
            grid = apply_shape(new_grid(d, cfg.max_shape), shape)
            mode = cfg.init_mode or d.default_init_mode
            if mode == "weighted":
                grid = init_random(gen, grid, self.init_probs)
            else:
                grid = init_empty(grid)
            grid, _ = place_pinpoints(gen, grid, cfg.pinpoints)
            targets = problems.sample_control_targets(gen, d, shape, cfg.controllable)
            if cfg.deterministic_metrics:
                self.metric_seeds[i] = int(gen.integers(0, 2**63))
            self._install_row(i, grid, shape, targets)
        self._recompute(np.asarray(idx, dtype=np.int64), reset=True)

    def _install_row(self, i: int, grid: TileGrid, shape: Shape, targets: problems.Targets) -> None:
        cfg = self.cfg
        self.tiles[i] = grid.tiles
        self.active[i] = grid.active
        self.frozen[i] = grid.frozen
        self.shape_hw[i] = (shape.height, shape.width)
        self.caps[i] = shape.area
        order = scan_order(grid.active, grid.frozen)
        if order.size == 0:
            raise ValueError("no editable cells: every active cell is frozen")
        self.order[i] = -1
        self.order[i, : order.size] = order
        self.order_len[i] = order.size
        self.pos_idx[i] = 0
        self.t[i] = 0
        self.changes[i] = 0
        self.max_steps[i] = cfg.max_steps if cfg.max_steps is not None else 3 * shape.area
        for m in self.domain.metric_names:
            self.lo[m][i], self.hi[m][i] = targets[m]

    def _metric_rngs(self, idx: np.ndarray) -> list[np.random.Generator]:
        if self.cfg.deterministic_metrics:
            return [np.random.default_rng(int(self.metric_seeds[int(i)])) for i in idx]
        return [self.rngs[int(i)] for i in idx]

    def _recompute(self, idx: np.ndarray, *, reset: bool) -> np.ndarray:
        """Metrics + loss for the given rows; returns their new loss."""
        vals, flags = problems.compute_metrics_batch(
            self.domain, self.tiles[idx], self.active[idx], self._metric_rngs(idx)
        )
        for m in self.domain.metric_names:
            self.values[m][idx] = vals[m]
            self.unreach[m][idx] = flags[m]
        lo = {m: self.lo[m][idx] for m in self.domain.metric_names}
        hi = {m: self.hi[m][idx] for m in self.domain.metric_names}
        new_loss = problems.loss_batch(self.domain, vals, flags, lo, hi, self.loss_weights)
        self.prev_loss[idx] = new_loss
        if reset:
            self.ep_reward[idx] = 0.0
            self.ep_start_loss[idx] = new_loss
        return new_loss

    # -- transition ---------------------------------------------------------

    def positions(self) -> np.ndarray:
        flat = self.order[np.arange(self.b), self.pos_idx]
        return np.stack(divmod(flat.astype(np.int64), self.w), axis=1)

    def step(self, actions: np.ndarray, *, auto_reset: bool) -> tuple[np.ndarray, np.ndarray, dict]:
        cfg = self.cfg
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (self.b,):
            raise ValueError(f"expected {self.b} actions, got shape {actions.shape}")
        if np.any((actions < 0) | (actions >= cfg.n_actions)):
            raise ValueError("action id out of range")

        rows = np.arange(self.b)
        pos = self.positions()
        pr, pc = pos[:, 0], pos[:, 1]
        cur = self.tiles[rows, pr, pc].astype(np.int64)
        wrote = (actions != NOOP) & (actions - 1 != cur)
        reward = np.zeros(self.b, dtype=np.float64)
        if wrote.any():
            hot = np.flatnonzero(wrote)
            self.tiles[hot, pr[hot], pc[hot]] = (actions[hot] - 1).astype(np.uint8)
            self.changes[hot] += 1
            before = self.prev_loss[hot].copy()
            after = self._recompute(hot, reset=False)
            reward[hot] = before - after
        self.ep_reward += reward

        self.pos_idx = (self.pos_idx + 1) % self.order_len
        self.t += 1
        done = self.t >= self.max_steps
        if cfg.change_budget is not None:
            done |= self.changes >= cfg.change_budget

        info = {
            "terminal": done.copy(),
            "episode_reward": np.where(done, self.ep_reward, 0.0),
            "episode_length": np.where(done, self.t, 0),
            "episode_start_loss": np.where(done, self.ep_start_loss, 0.0),
            "final_loss": np.where(done, self.prev_loss, 0.0),
        }
        if auto_reset and done.any():
            self.reset_rows(np.flatnonzero(done))
        return reward, done, info

    # -- views ----------------------------------------------------------------

    def observe(self) -> np.ndarray:
        return build_observation(
            self.domain,
            self.tiles,
            self.frozen,
            self.positions(),
            self.cfg.obs_size,
            self.control,
            self.values,
            self.lo,
            self.hi,
            self.caps,
        )

    def grid_view(self, i: int) -> TileGrid:
        return TileGrid(
            domain=self.domain,
            tiles=self.tiles[i].copy(),
            active=self.active[i].copy(),
            frozen=self.frozen[i].copy(),
        )

    def snapshot(self, i: int, *, done: bool) -> EnvState:
        d = self.domain
        pos = self.positions()[i]
        return EnvState(
            config=self.cfg,
            grid=self.grid_view(i),
            shape=Shape(width=int(self.shape_hw[i, 1]), height=int(self.shape_hw[i, 0])),
            pos=(int(pos[0]), int(pos[1])),
            pos_idx=int(self.pos_idx[i]),
            order=self.order[i, : int(self.order_len[i])].copy(),
            t=int(self.t[i]),
            changes=int(self.changes[i]),
            targets={m: (int(self.lo[m][i]), int(self.hi[m][i])) for m in d.metric_names},
            metrics=problems.MetricVector(
                values={m: int(self.values[m][i]) for m in d.metric_names},
                unreachable=frozenset(m for m in d.metric_names if self.unreach[m][i]),
            ),
            prev_loss=float(self.prev_loss[i]),
            ep_reward=float(self.ep_reward[i]),
            ep_start_loss=float(self.ep_start_loss[i]),
            max_steps=int(self.max_steps[i]),
            rng_state=self.rngs[i].bit_generator.state,
            metric_seed=int(self.metric_seeds[i]) if self.cfg.deterministic_metrics else None,
            done=done,
        )

    def install_state(self, i: int, state: EnvState) -> None:
        self.tiles[i] = state.grid.tiles
        self.active[i] = state.grid.active
        self.frozen[i] = state.grid.frozen
        self.shape_hw[i] = (state.shape.height, state.shape.width)
        self.caps[i] = state.shape.area
        self.order[i] = -1
        self.order[i, : state.order.size] = state.order
        self.order_len[i] = state.order.size
        self.pos_idx[i] = state.pos_idx
        self.t[i] = state.t
        self.changes[i] = state.changes
        self.max_steps[i] = state.max_steps
        for m in self.domain.metric_names:
            self.lo[m][i], self.hi[m][i] = state.targets[m]
            self.values[m][i] = state.metrics.values[m]
            self.unreach[m][i] = m in state.metrics.unreachable
        self.prev_loss[i] = state.prev_loss
        self.ep_reward[i] = state.ep_reward
        self.ep_start_loss[i] = state.ep_start_loss
        self.rngs[i] = _restore_rng(state.rng_state)
        if state.metric_seed is not None:
            self.metric_seeds[i] = state.metric_seed


def rng_from_state(state: dict) -> np.random.Generator:
    """Rebuild the generator a snapshot's ``rng_state`` captured; resuming
    an episode chain from a snapshot continues the exact random stream."""
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


_restore_rng = rng_from_state


# ---------------------------------------------------------------------------
# batched facade
# ---------------------------------------------------------------------------


class BatchEnv:
    """Lockstep batch of identical-config environments with auto-reset.

    Rows consume independent random streams spawned from ``seed``; running
    row ``i`` alone through the scalar functions with the matching spawned
    stream reproduces its trajectory exactly.
    """

    def __init__(self, config: EnvConfig, n_envs: int, seed: int = 0):
        rngs = spawn_rngs(seed, n_envs)
        self._core = _Core(config, n_envs, rngs)
        self._started = False

    @property
    def config(self) -> EnvConfig:
        return self._core.cfg

    @property
    def n_envs(self) -> int:
        return self._core.b

    @property
    def n_actions(self) -> int:
        return self._core.cfg.n_actions

    @property
    def observation_shape(self) -> tuple[int, int, int]:
        cfg = self._core.cfg
        return (cfg.observation_channels(), cfg.obs_size, cfg.obs_size)

    def reset(self) -> np.ndarray:
        self._core.reset_rows(np.arange(self._core.b))
        self._started = True
        return self._core.observe()

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
        if not self._started:
            raise RuntimeError("reset() the batch before stepping")
        reward, done, info = self._core.step(actions, auto_reset=True)
        return self._core.observe(), reward, done, info

    def snapshot(self, i: int) -> EnvState:
        return self._core.snapshot(i, done=False)

    def grid_view(self, i: int) -> TileGrid:
        return self._core.grid_view(i)

    # -- checkpoint support --------------------------------------------------

    def state_dict(self) -> dict[str, Any]:
        c = self._core
        d = c.domain
        return {
            "started": np.array([self._started]),
            "tiles": c.tiles.copy(),
            "active": c.active.copy(),
            "frozen": c.frozen.copy(),
            "shape_hw": c.shape_hw.copy(),
            "order": c.order.copy(),
            "order_len": c.order_len.copy(),
            "pos_idx": c.pos_idx.copy(),
            "t": c.t.copy(),
            "changes": c.changes.copy(),
            "max_steps": c.max_steps.copy(),
            "lo": np.stack([c.lo[m] for m in d.metric_names]),
            "hi": np.stack([c.hi[m] for m in d.metric_names]),
            "values": np.stack([c.values[m] for m in d.metric_names]),
            "unreach": np.stack([c.unreach[m] for m in d.metric_names]),
            "prev_loss": c.prev_loss.copy(),
            "ep_reward": c.ep_reward.copy(),
            "ep_start_loss": c.ep_start_loss.copy(),
            "metric_seeds": c.metric_seeds.copy(),
            "rng_states": [g.bit_generator.state for g in c.rngs],
        }

    def load_state_dict(self, state: dict[str, Any]) -> None:
        c = self._core
        d = c.domain
        self._started = bool(np.asarray(state["started"]).ravel()[0])
        c.tiles[:] = state["tiles"]
        c.active[:] = state["active"]
        c.frozen[:] = state["frozen"]
        c.shape_hw[:] = state["shape_hw"]
        c.caps[:] = c.shape_hw[:, 0] * c.shape_hw[:, 1]
        c.order[:] = state["order"]
        c.order_len[:] = state["order_len"]
        c.pos_idx[:] = state["pos_idx"]
        c.t[:] = state["t"]
        c.changes[:] = state["changes"]
        c.max_steps[:] = state["max_steps"]
        for k, m in enumerate(d.metric_names):
            c.lo[m][:] = state["lo"][k]
            c.hi[m][:] = state["hi"][k]
            c.values[m][:] = state["values"][k]
            c.unreach[m][:] = state["unreach"][k]
        c.prev_loss[:] = state["prev_loss"]
        c.ep_reward[:] = state["ep_reward"]
        c.ep_start_loss[:] = state["ep_start_loss"]
        c.metric_seeds[:] = state["metric_seeds"]
        c.rngs = [_restore_rng(s) for s in state["rng_states"]]

    def observe(self) -> np.ndarray:
        return self._core.observe()


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent per-row generators; row i of a batch and a scalar run
    seeded with ``spawn_rngs(seed, n)[i]`` consume identical streams."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


# ---------------------------------------------------------------------------
# scalar facade
# ---------------------------------------------------------------------------


def reset(config: EnvConfig, rng: np.random.Generator) -> tuple[EnvState, np.ndarray]:
    """Start one episode, drawing from ``rng``. Returns state and the first
    observation."""
    core = _Core(config, 1, [rng])
    core.reset_rows(np.array([0]))
    state = core.snapshot(0, done=False)
    return state, core.observe()[0]


def step(state: EnvState, action: int) -> tuple[EnvState, float, bool, dict]:
    """One scalar transition. Pure: returns a fresh state, never mutates."""
    if state.done:
        raise ValueError("episode is done; reset first")
    core = _scalar_core(state)
    reward, done, info = core.step(np.array([action]), auto_reset=False)
    new_state = core.snapshot(0, done=bool(done[0]))
    out: dict[str, Any] = {
        "changed": bool(new_state.changes > state.changes),
        "loss": new_state.prev_loss,
        "metrics": new_state.metrics,
    }
    if done[0]:
        out.update(
            episode_reward=float(info["episode_reward"][0]),
            episode_length=int(info["episode_length"][0]),
            episode_start_loss=float(info["episode_start_loss"][0]),
            final_loss=float(info["final_loss"][0]),
        )
    return new_state, float(reward[0]), bool(done[0]), out


def observe(state: EnvState) -> np.ndarray:
    core = _scalar_core(state)
    return core.observe()[0]


def next_pos(state: EnvState) -> tuple[int, int]:
    """Where the scan moves after the current step (wraps past the end)."""
    if state.done:
        raise ValueError("episode is done")
    nxt = int(state.order[(state.pos_idx + 1) % state.order.size])
    return divmod(nxt, state.grid.width)


def _scalar_core(state: EnvState) -> _Core:
    core = _Core(state.config, 1, [_restore_rng(state.rng_state)])
    core.install_state(0, state)
    return core


# ---------------------------------------------------------------------------
# designer edits (used by the session server; episodes must be paused)
# ---------------------------------------------------------------------------


def with_pin(state: EnvState, row: int, col: int, tile: int | str) -> EnvState:
    """Pin a tile mid-episode: freeze the cell, recompute metrics and loss,
    drop the cell from the scan order."""
    grid = pin_cell(state.grid, row, col, tile)
    return _after_grid_edit(state, grid)


def without_pin(state: EnvState, row: int, col: int) -> EnvState:
    """Release a pinned cell back into the scan order."""
    grid = unpin_cell(state.grid, row, col)
    return _after_grid_edit(state, grid)


def with_target(state: EnvState, metric: str, value: int) -> EnvState:
    """Move one metric's target to a point value and reprice the loss."""
    d = state.config.domain_obj
    if metric not in d.metric_names:
        raise ValueError(f"unknown metric {metric!r}")
    cap = problems.metric_cap(state.shape)
    if not 0 <= value <= cap:
        raise ValueError(f"target {value} outside [0, {cap}]")
    targets = dict(state.targets)
    targets[metric] = (value, value)
    new_loss = problems.loss(state.metrics, targets, state.config.weights(), d)
    return replace(state, targets=targets, prev_loss=new_loss)


def _after_grid_edit(state: EnvState, grid: TileGrid) -> EnvState:
    order = scan_order(grid.active, grid.frozen)
    if order.size == 0:
        raise ValueError("edit would leave no editable cells")
    # Stay on the same cell when possible, otherwise resume at the next
    # editable cell in scan order.
    rank = _serpentine_rank(grid.tiles.shape[0], grid.tiles.shape[1])
    old_cell = int(state.order[state.pos_idx])
    ranks = rank[order]
    pos_idx = int(np.searchsorted(ranks, rank[old_cell])) % order.size
    flat = int(order[pos_idx])

    if state.metric_seed is not None:
        metric_rng = np.random.default_rng(state.metric_seed)
        rng_state = state.rng_state
    else:
        metric_rng = _restore_rng(state.rng_state)
        rng_state = None  # filled below from the advanced generator
    metrics = problems.compute_metrics(state.config.domain_obj, grid, metric_rng)
    if rng_state is None:
        rng_state = metric_rng.bit_generator.state
    new_loss = problems.loss(metrics, state.targets, state.config.weights(), state.config.domain_obj)
    return replace(
        state,
        grid=grid,
        order=order,
        pos_idx=pos_idx,
        pos=divmod(flat, grid.width),
        metrics=metrics,
        prev_loss=new_loss,
        rng_state=rng_state,
    )
