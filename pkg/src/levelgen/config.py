"""Run configuration: one YAML file covering environment, architecture,
trainer, and harness options, with dotted-path overrides from the command
line. Unknown keys are rejected by name before any work starts."""
from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .env import EnvConfig
from .harness import BENCH_LADDER, EVAL_WIDTHS
from .nets import ArchConfig, default_arch
from .ppo import PpoConfig


class ConfigError(ValueError):
    """Invalid run configuration (bad file, unknown key, bad value)."""


@dataclass(frozen=True)
class EvalOptions:
    widths: tuple[int, ...] = EVAL_WIDTHS
    eval_shapes: tuple[bool, ...] = (False, True)
    n_seeds: int = 3
    episodes_per_seed: int = 32
    greedy: bool = True


@dataclass(frozen=True)
class BenchOptions:
    ladder: tuple[int, ...] = BENCH_LADDER
    seconds: float = 2.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str | None = None
    env: EnvConfig = field(default_factory=EnvConfig)
    arch: ArchConfig | None = None
    ppo: PpoConfig = field(default_factory=PpoConfig)
    eval: EvalOptions = field(default_factory=EvalOptions)
    bench: BenchOptions = field(default_factory=BenchOptions)

    def resolved_arch(self) -> ArchConfig:
        if self.arch is not None:
            return self.arch
        return default_arch(
            self.env.obs_size, self.env.observation_channels(), self.env.n_actions
        )


_SECTIONS = {"env": EnvConfig, "arch": ArchConfig, "ppo": PpoConfig,
             "eval": EvalOptions, "bench": BenchOptions}
_TOP_KEYS = {"seed", "out", *_SECTIONS}


def _parse_scalar(text: str) -> Any:
    # plain numeric forms first: yaml 1.1 reads "1e-3" as a string
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse override value {text!r}: {e}") from e


def parse_overrides(pairs: tuple[str, ...] | list[str]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        out[key.strip()] = _parse_scalar(value)
    return out


def _apply_dotted(data: dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {dotted!r} descends into non-mapping key {part!r}")
        node = nxt
    node[parts[-1]] = value


def _build_section(name: str, cls: type, payload: dict[str, Any], env: EnvConfig | None) -> Any:
    allowed = {f.name: f for f in fields(cls)}
    for key in payload:
        if key not in allowed:
            raise ConfigError(f"unknown config key: {name}.{key}")
    kwargs = {}
    for key, value in payload.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        if cls is ArchConfig:
            # partial arch sections override the derived default
            assert env is not None
            base = default_arch(env.obs_size, env.observation_channels(), env.n_actions)
            return dataclasses.replace(base, **kwargs)
        return cls(**kwargs)
    except (TypeError, ValueError, KeyError) as e:
        raise ConfigError(f"invalid [{name}] section: {e}") from e


def load_run_config(
    path: str | Path | None = None,
    overrides: tuple[str, ...] | list[str] = (),
    *,
    base: dict[str, Any] | None = None,
) -> RunConfig:
    """Read a YAML run config (missing file fields keep defaults) and apply
    ``section.key=value`` overrides on top.

    ``base`` supplies section values that fill in wherever the file and the
    overrides are silent (e.g. the environment a checkpoint was trained
    with); anything stated explicitly wins over it.
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path) as f:
                loaded = yaml.safe_load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML: {e}") from e
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping at the top level")
        data = loaded

    for dotted, value in parse_overrides(overrides).items():
        _apply_dotted(data, dotted, value)

    for name, payload in (base or {}).items():
        if isinstance(payload, dict):
            section = data.get(name)
            if section is None:
                data[name] = dict(payload)
            elif isinstance(section, dict):
                for k, v in payload.items():
                    section.setdefault(k, v)
        else:
            data.setdefault(name, payload)

    for key in data:
        if key not in _TOP_KEYS:
            raise ConfigError(f"unknown config key: {key}")
    for name in _SECTIONS:
        section = data.get(name)
        if section is not None and not isinstance(section, dict):
            raise ConfigError(f"config section [{name}] must be a mapping")

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    out = data.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out must be a path string")

    env = _build_section("env", EnvConfig, data.get("env") or {}, None)
    arch = None
    if data.get("arch"):
        arch = _build_section("arch", ArchConfig, data["arch"], env)
    ppo_payload = dict(data.get("ppo") or {})
    ppo_payload.setdefault("seed", seed)  # run seed unless the section pins its own
    ppo = _build_section("ppo", PpoConfig, ppo_payload, None)
    ev = _build_section("eval", EvalOptions, data.get("eval") or {}, None)
    bench = _build_section("bench", BenchOptions, data.get("bench") or {}, None)
    return RunConfig(seed=seed, out=out, env=env, arch=arch, ppo=ppo, eval=ev, bench=bench)


def _plain(value: Any) -> Any:
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def dump_run_config(cfg: RunConfig, *, resolved: bool = True) -> str:
    """YAML echo of a run config; with ``resolved`` the derived architecture
    is written out explicitly so the echo reproduces the run exactly."""
    d: dict[str, Any] = {"seed": cfg.seed, "out": cfg.out}
    d["env"] = _plain(asdict(cfg.env))
    arch = cfg.resolved_arch() if resolved else cfg.arch
    d["arch"] = _plain(asdict(arch)) if arch is not None else None
    d["ppo"] = _plain(asdict(cfg.ppo))
    d["eval"] = _plain(asdict(cfg.eval))
    d["bench"] = _plain(asdict(cfg.bench))
    return yaml.safe_dump(d, sort_keys=False)
