"""Websocket session service for the designer UI.

One connection = one session = one environment episode under the designer's
control. All messages are JSON conforming to ``protocol_v1.schema.json``;
incoming messages are schema-validated before dispatch. Server ``state`` and
``metrics`` messages carry a per-session revision number that strictly
increases, so clients can detect drops and ignore stale frames.

Human edits (pinpoints, targets) are accepted only while the agent is
paused; the run loop and the message handler run on one event loop, so each
agent step is atomic with respect to edits.
"""
from __future__ import annotations

import asyncio
import json
from dataclasses import replace
from importlib import resources
from pathlib import Path

import jsonschema
from jsonschema import exceptions as js_exceptions
import numpy as np

from . import problems
from .env import EnvConfig, EnvState, observe, reset, step, with_pin, with_target, without_pin
from .textfmt import MASK_FREE, MASK_FROZEN, render_text

PROTOCOL_VERSION = 1


def protocol_schema() -> dict:
    text = resources.files("levelgen").joinpath("protocol_v1.schema.json").read_text()
    return json.loads(text)


def _client_validator() -> jsonschema.Draft202012Validator:
    schema = protocol_schema()
    return jsonschema.Draft202012Validator(
        {"$ref": "#/$defs/clientMessage", "$defs": schema["$defs"]}
    )


class SessionError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class Session:
    """Single designer session: an environment state plus a policy."""

    def __init__(self, base_config: EnvConfig, model, seed: int):
        # deterministic metrics make pause/resume replays exact
        self.base_config = replace(base_config, deterministic_metrics=True)
        self.model = model
        self.seed = seed
        self.revision = 0
        self.running = False
        self.sample = False
        self.last_reward = 0.0
        self._sampler = None
        self._action_rng = np.random.default_rng(seed + 1)
        self.state: EnvState
        self.obs: np.ndarray
        self._reset(self.base_config, seed)

    # -- message handling ------------------------------------------------

    def handle(self, msg: dict) -> list[dict]:
        """Apply one client message; return the replies to send."""
        kind = msg["type"]
        if kind == "reset":
            return self.do_reset(msg)
        if kind == "set_pinpoint":
            return self.do_set_pinpoint(msg)
        if kind == "clear_pinpoint":
            return self.do_clear_pinpoint(msg)
        if kind == "set_target":
            return self.do_set_target(msg)
        if kind == "step":
            return self.do_step()
        if kind == "pause":
            self.running = False
            return [self.state_message()]
        raise SessionError("runtime", f"unhandled message type {kind!r}")

    def do_reset(self, msg: dict) -> list[dict]:
        self.running = False
        cfg = self.base_config
        overrides = dict(msg.get("config") or {})
        for key in ("pinpoints", "controllable"):
            if key in overrides:
                overrides[key] = tuple(overrides[key])
        shape = msg.get("shape")
        if shape is not None:
            overrides["max_width"] = shape["width"]
            overrides["max_height"] = shape["height"]
            overrides["randomize_shape"] = False
        try:
            cfg = replace(cfg, **overrides)
        except ValueError as e:
            raise SessionError("bad_config", str(e)) from e
        if self.model is not None and self.model.arch.obs_size != cfg.obs_size:
            raise SessionError(
                "bad_config",
                "policy expects a different observation size; load a matching checkpoint",
            )
        seed = msg.get("seed", self.seed)
        self.sample = bool(msg.get("sample", False))
        try:
            self._reset(cfg, seed)
        except ValueError as e:
            raise SessionError("bad_config", str(e)) from e
        return [self.state_message()]

    def do_set_pinpoint(self, msg: dict) -> list[dict]:
        self._require_paused()
        try:
            self.state = with_pin(self.state, msg["row"], msg["col"], msg["tile"])
        except (ValueError, KeyError) as e:
            raise SessionError("illegal_pinpoint", str(e)) from e
        self.obs = observe(self.state)
        return [self.metrics_message(), self.state_message()]

    def do_clear_pinpoint(self, msg: dict) -> list[dict]:
        self._require_paused()
        try:
            self.state = without_pin(self.state, msg["row"], msg["col"])
        except ValueError as e:
            raise SessionError("illegal_pinpoint", str(e)) from e
        self.obs = observe(self.state)
        return [self.metrics_message(), self.state_message()]

    def do_set_target(self, msg: dict) -> list[dict]:
        self._require_paused()
        try:
            self.state = with_target(self.state, msg["metric"], msg["value"])
        except ValueError as e:
            raise SessionError("illegal_target", str(e)) from e
        return [self.metrics_message(), self.state_message()]

    def do_step(self) -> list[dict]:
        if self.running:
            raise SessionError("not_paused", "already running; pause first")
        if self.state.done:
            raise SessionError("runtime", "episode finished; reset first")
        self.step_once()
        return [self.state_message()]

    # -- internals ---------------------------------------------------------

    def _reset(self, cfg: EnvConfig, seed: int) -> None:
        self.state, self.obs = reset(cfg, np.random.default_rng(seed))
        self._action_rng = np.random.default_rng(seed + 1)
        if self.model is not None:
            import torch

            self._sampler = torch.Generator()
            self._sampler.manual_seed(seed + 2)
        self.last_reward = 0.0

    def _require_paused(self) -> None:
        if self.running:
            raise SessionError("not_paused", "edits are accepted only while paused")

    def _act(self) -> int:
        if self.model is None:
            return int(self._action_rng.integers(self.state.config.n_actions))
        import torch

        with torch.no_grad():
            logits, _ = self.model(torch.from_numpy(self.obs[None]))
        if self.sample:
            probs = torch.softmax(logits, dim=-1)
            return int(torch.multinomial(probs, 1, generator=self._sampler))
        return int(logits.argmax())

    def step_once(self) -> bool:
        """Advance one agent step; returns True while the episode continues."""
        if self.state.done:
            return False
        self.state, reward, done, _ = step(self.state, self._act())
        self.obs = observe(self.state)
        self.last_reward = reward
        return not done

    # -- outgoing messages ---------------------------------------------------

    def _next_revision(self) -> int:
        self.revision += 1
        return self.revision

    def state_message(self) -> dict:
        st = self.state
        grid = st.grid
        frozen_rows = [
            "".join(MASK_FROZEN if f else MASK_FREE for f in row) for row in grid.frozen
        ]
        return {
            "type": "state",
            "revision": self._next_revision(),
            "domain": st.config.domain,
            "shape": {"width": st.shape.width, "height": st.shape.height},
            "grid": render_text(grid),
            "frozen": frozen_rows,
            "pos": [int(st.pos[0]), int(st.pos[1])],
            "t": st.t,
            "max_steps": st.max_steps,
            "changes": st.changes,
            "metrics": {k: int(v) for k, v in st.metrics.values.items()},
            "unreachable": sorted(st.metrics.unreachable),
            "loss": st.prev_loss,
            "targets": {m: [int(lo), int(hi)] for m, (lo, hi) in st.targets.items()},
            "running": self.running,
            "done": st.done,
            "ep_reward": st.ep_reward,
            "last_reward": self.last_reward,
        }

    def metrics_message(self) -> dict:
        st = self.state
        d = st.config.domain_obj
        weights = st.config.weights()
        w_regions = float(weights.get("regions", 0.0))
        terms = {}
        for m in d.metric_names:
            wm = float(weights.get(m, 0.0))
            v = float(st.metrics.values[m])
            lo, hi = st.targets[m]
            if m in d.path_metrics and m in st.metrics.unreachable:
                terms[m] = wm * float(hi) + w_regions
            else:
                terms[m] = wm * (max(0.0, lo - v) + max(0.0, v - hi))
        return {
            "type": "metrics",
            "revision": self._next_revision(),
            "metrics": {k: int(v) for k, v in st.metrics.values.items()},
            "unreachable": sorted(st.metrics.unreachable),
            "loss": st.prev_loss,
            "targets": {m: [int(lo), int(hi)] for m, (lo, hi) in st.targets.items()},
            "terms": terms,
        }

    def error_message(self, code: str, message: str) -> dict:
        return {"type": "error", "code": code, "message": message}


# ---------------------------------------------------------------------------
# the websocket server
# ---------------------------------------------------------------------------


class SessionServer:
    def __init__(self, default_config: EnvConfig, model=None, seed: int = 0):
        self.default_config = default_config
        self.model = model  # shared read-only across sessions
        self.seed = seed
        self.validator = _client_validator()

    async def handler(self, ws) -> None:
        session = Session(self.default_config, self.model, self.seed)
        run_task: asyncio.Task | None = None

        async def send(payload: dict) -> None:
            await ws.send(json.dumps(payload))

        async def run_loop(rate: float) -> None:
            try:
                while session.running:
                    alive = session.step_once()
                    if not alive:
                        session.running = False
                    await send(session.state_message())
                    if not alive:
                        break
                    await asyncio.sleep(1.0 / rate)
            except asyncio.CancelledError:
                raise

        await send(session.state_message())
        try:
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError as e:
                    await send(session.error_message("schema", f"not valid JSON: {e}"))
                    continue
                err = js_exceptions.best_match(self.validator.iter_errors(msg))
                if err is not None:
                    await send(session.error_message("schema", err.message))
                    continue

                kind = msg["type"]
                if kind == "run":
                    if session.running:
                        await send(session.error_message("not_paused", "already running"))
                        continue
                    if session.state.done:
                        await send(session.error_message("runtime", "episode finished; reset first"))
                        continue
                    session.running = True
                    await send(session.state_message())
                    run_task = asyncio.create_task(run_loop(float(msg.get("rate", 20.0))))
                    continue
                if kind in ("pause", "reset") and run_task is not None:
                    session.running = False
                    run_task.cancel()
                    try:
                        await run_task
                    except asyncio.CancelledError:
                        pass
                    run_task = None
                try:
                    replies = session.handle(msg)
                except SessionError as e:
                    replies = [session.error_message(e.code, str(e))]
                except Exception as e:  # pragma: no cover - defensive
                    replies = [session.error_message("runtime", str(e))]
                for reply in replies:
                    await send(reply)
        finally:
            if run_task is not None:
                run_task.cancel()


async def serve_sessions(
    host: str = "127.0.0.1",
    port: int = 8765,
    *,
    default_config: EnvConfig | None = None,
    checkpoint: str | Path | None = None,
    seed: int = 0,
):
    """Start the websocket server; returns the server object (async context)."""
    from websockets.asyncio.server import serve as ws_serve

    model = None
    cfg = default_config or EnvConfig()
    if checkpoint is not None:
        from .nets import load_checkpoint
        from .ppo import env_config_from_dict

        ck = load_checkpoint(checkpoint)
        model = ck.build_model()
        model.eval()
        if default_config is None:
            cfg = env_config_from_dict(ck.meta["env"])
        elif ck.arch.obs_size != cfg.obs_size:
            raise ValueError("checkpoint architecture and config observation size disagree")
    server = SessionServer(cfg, model, seed)
    return await ws_serve(server.handler, host, port)


def run_server(
    host: str = "127.0.0.1",
    port: int = 8765,
    *,
    default_config: EnvConfig | None = None,
    checkpoint: str | Path | None = None,
    seed: int = 0,
) -> None:
    """Blocking entry point used by the command line."""

    async def main() -> None:
        server = await serve_sessions(
            host, port, default_config=default_config, checkpoint=checkpoint, seed=seed
        )
        addr = server.sockets[0].getsockname()
        print(f"serving designer sessions on ws://{addr[0]}:{addr[1]}")
        await server.wait_closed()

    asyncio.run(main())
