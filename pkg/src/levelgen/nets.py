"""Conv actor-critic policy and the checkpoint container.

The network is a shared 3x3 valid-convolution trunk over the egocentric
observation, flattened into a small fully connected stack that branches
into action logits and a scalar value. Widths are configurable;
:func:`match_hidden_dims` grows a smaller-window architecture until its
parameter count almost reaches (never exceeds) a reference model's, for
like-for-like capacity comparisons across observation sizes.

Checkpoints are numpy ``.npz`` archives: a single ``meta`` JSON string
(format tag, version, architecture and environment echoes, step counter,
optional trainer payload) plus named little-endian arrays: ``param/<name>``
for model weights and further namespaced arrays added by the trainer.
The layout is documented in ``docs/file-formats.md``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import torch
from torch import nn

CHECKPOINT_FORMAT = "levelgen-checkpoint"
CHECKPOINT_VERSION = 1

MATCH_FLOOR = 0.9


@dataclass(frozen=True)
class ArchConfig:
    obs_size: int
    in_channels: int
    n_actions: int
    conv_channels: tuple[int, ...] = (16, 32)
    fc_dims: tuple[int, ...] = (64,)

    def __post_init__(self) -> None:
        if self.obs_size < 1 or self.in_channels < 1:
            raise ValueError("bad observation dimensions")
        if self.n_actions < 2:
            raise ValueError("need at least a no-op and one tile action")
        if not self.fc_dims:
            raise ValueError("at least one fully connected layer is required")
        if any(c < 1 for c in self.conv_channels) or any(d < 1 for d in self.fc_dims):
            raise ValueError("layer widths must be positive")
        if self.conv_side() < 1:
            raise ValueError(
                f"{len(self.conv_channels)} 3x3 valid convs need obs_size >= "
                f"{2 * len(self.conv_channels) + 1}, got {self.obs_size}"
            )

    def conv_side(self) -> int:
        return self.obs_size - 2 * len(self.conv_channels)

    def flat_dim(self) -> int:
        c = self.conv_channels[-1] if self.conv_channels else self.in_channels
        return c * self.conv_side() ** 2

    def with_dims(self, conv_channels: tuple[int, ...], fc_dims: tuple[int, ...]) -> "ArchConfig":
        return ArchConfig(
            obs_size=self.obs_size,
            in_channels=self.in_channels,
            n_actions=self.n_actions,
            conv_channels=conv_channels,
            fc_dims=fc_dims,
        )


def default_arch(obs_size: int, in_channels: int, n_actions: int) -> ArchConfig:
    """Two 16/32-channel convs when the window allows, one otherwise."""
    convs = (16, 32) if obs_size >= 5 else (16,)
    return ArchConfig(
        obs_size=obs_size,
        in_channels=in_channels,
        n_actions=n_actions,
        conv_channels=convs,
        fc_dims=(64,),
    )


def count_params(arch: ArchConfig) -> int:
    total = 0
    cin = arch.in_channels
    for cout in arch.conv_channels:
        total += 9 * cin * cout + cout
        cin = cout
    d = arch.flat_dim()
    for h in arch.fc_dims:
        total += d * h + h
        d = h
    total += d * arch.n_actions + arch.n_actions  # policy head
    total += d + 1  # value head
    return total


def match_hidden_dims(obs_size: int, reference: ArchConfig) -> ArchConfig:
    """Resize a ``reference`` architecture for a smaller window.

    Starting from the reference widths, every layer is widened by one unit
    in round-robin order as long as the parameter count stays at or below
    the reference count. The result is the last configuration that does
    not exceed it.
    """
    if obs_size > reference.obs_size:
        raise ValueError("target obs_size exceeds the reference window")
    budget = count_params(reference)
    convs = list(reference.conv_channels)
    # shrink the conv stack if the window is too small for it
    while convs and obs_size - 2 * len(convs) < 1:
        convs.pop()
    fcs = list(reference.fc_dims)
    arch = ArchConfig(
        obs_size=obs_size,
        in_channels=reference.in_channels,
        n_actions=reference.n_actions,
        conv_channels=tuple(convs),
        fc_dims=tuple(fcs),
    )
    if count_params(arch) > budget:
        raise ValueError("reference widths already exceed the budget at this obs size")
    layers = len(convs) + len(fcs)
    growing = [True] * layers
    while any(growing):
        for k in range(layers):
            if not growing[k]:
                continue
            trial_convs, trial_fcs = list(convs), list(fcs)
            if k < len(convs):
                trial_convs[k] += 1
            else:
                trial_fcs[k - len(convs)] += 1
            trial = arch.with_dims(tuple(trial_convs), tuple(trial_fcs))
            if count_params(trial) <= budget:
                convs, fcs, arch = trial_convs, trial_fcs, trial
            else:
                growing[k] = False
    return arch


def layer_init(layer: nn.Module, std: float = float(np.sqrt(2)), bias_const: float = 0.0) -> nn.Module:
    torch.nn.init.orthogonal_(layer.weight, std)
    torch.nn.init.constant_(layer.bias, bias_const)
    return layer


class ConvPolicy(nn.Module):
    """Shared conv trunk, one FC stack, separate action/value heads."""

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        trunk: list[nn.Module] = []
        cin = arch.in_channels
        for cout in arch.conv_channels:
            trunk.append(layer_init(nn.Conv2d(cin, cout, kernel_size=3)))
            trunk.append(nn.ReLU())
            cin = cout
        trunk.append(nn.Flatten())
        d = arch.flat_dim()
        for h in arch.fc_dims:
            trunk.append(layer_init(nn.Linear(d, h)))
            trunk.append(nn.ReLU())
            d = h
        self.trunk = nn.Sequential(*trunk)
        self.policy_head = layer_init(nn.Linear(d, arch.n_actions), std=0.01)
        self.value_head = layer_init(nn.Linear(d, 1), std=1.0)

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if obs.ndim != 4 or obs.shape[1:] != (
            self.arch.in_channels,
            self.arch.obs_size,
            self.arch.obs_size,
        ):
            raise ValueError(
                f"expected [batch, {self.arch.in_channels}, {self.arch.obs_size}, "
                f"{self.arch.obs_size}] observations, got {tuple(obs.shape)}"
            )
        hidden = self.trunk(obs)
        return self.policy_head(hidden), self.value_head(hidden).squeeze(-1)


def init_policy(arch: ArchConfig, seed: int) -> ConvPolicy:
    """Deterministic fresh policy: same seed, same weights."""
    torch.manual_seed(seed)
    return ConvPolicy(arch)


# ---------------------------------------------------------------------------
# checkpoint container
# ---------------------------------------------------------------------------


def _le(a: np.ndarray) -> np.ndarray:
    """Force little-endian byte order for on-disk arrays."""
    dt = a.dtype
    if dt.byteorder == ">" or (dt.byteorder == "=" and not np.little_endian):
        return a.astype(dt.newbyteorder("<"))
    return a


@dataclass
class Checkpoint:
    meta: dict[str, Any]
    arrays: dict[str, np.ndarray]

    @property
    def arch(self) -> ArchConfig:
        a = self.meta["arch"]
        return ArchConfig(
            obs_size=a["obs_size"],
            in_channels=a["in_channels"],
            n_actions=a["n_actions"],
            conv_channels=tuple(a["conv_channels"]),
            fc_dims=tuple(a["fc_dims"]),
        )

    @property
    def step(self) -> int:
        return int(self.meta["step"])

    def build_model(self) -> ConvPolicy:
        model = ConvPolicy(self.arch)
        state = {
            k.removeprefix("param/"): torch.from_numpy(v.copy())
            for k, v in self.arrays.items()
            if k.startswith("param/")
        }
        model.load_state_dict(state)
        return model

    def namespace(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            k.removeprefix(prefix): v for k, v in self.arrays.items() if k.startswith(prefix)
        }


def save_checkpoint(
    path: str | Path,
    model: ConvPolicy,
    *,
    env_config: dict[str, Any],
    step: int,
    extra_meta: dict[str, Any] | None = None,
    extra_arrays: dict[str, np.ndarray] | None = None,
) -> Path:
    path = Path(path)
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "arch": asdict(model.arch),
        "env": env_config,
        "step": int(step),
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays: dict[str, np.ndarray] = {}
    for name, tensor in model.state_dict().items():
        arrays[f"param/{name}"] = _le(tensor.detach().numpy().astype("<f4"))
    for name, arr in (extra_arrays or {}).items():
        arrays[name] = _le(np.asarray(arr))
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(f, meta=np.array(json.dumps(meta)), **arrays)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: not a recognized checkpoint")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
        arrays = {k: z[k] for k in z.files if k != "meta"}
    return Checkpoint(meta=meta, arrays=arrays)


def iter_layer_shapes(arch: ArchConfig) -> Iterable[tuple[str, tuple[int, ...]]]:
    """Named parameter shapes implied by an architecture, for validation."""
    model_shapes = []
    cin = arch.in_channels
    idx = 0
    for cout in arch.conv_channels:
        model_shapes.append((f"trunk.{idx}.weight", (cout, cin, 3, 3)))
        model_shapes.append((f"trunk.{idx}.bias", (cout,)))
        idx += 2
        cin = cout
    idx += 1  # flatten
    d = arch.flat_dim()
    for h in arch.fc_dims:
        model_shapes.append((f"trunk.{idx}.weight", (h, d)))
        model_shapes.append((f"trunk.{idx}.bias", (h,)))
        idx += 2
        d = h
    model_shapes.append(("policy_head.weight", (arch.n_actions, d)))
    model_shapes.append(("policy_head.bias", (arch.n_actions,)))
    model_shapes.append(("value_head.weight", (1, d)))
    model_shapes.append(("value_head.bias", (1,)))
    return model_shapes
