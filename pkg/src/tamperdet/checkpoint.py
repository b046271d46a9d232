"""Versioned checkpoint container, independent of the torch serialization format.

Format version 1: a Python pickle (protocol 4) of one dict with keys

    format_version  int, currently 1
    step            completed optimizer steps
    config          echo of the training config (plain nested dict)
    params          {state_dict name: numpy array}
    optimizer       Adam state with tensors converted to numpy, or None
    rng             {"numpy": bit-generator state dict, "torch": uint8 array}, or None
    best_val_com_f1 float (NaN when no validation has run)

Identical training state serializes to identical bytes, which the
determinism and resume guarantees rely on.
"""
from __future__ import annotations

import pickle
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import torch

from .errors import ConfigurationError
from .model import ModelConfig, TwoBranchNet

FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    step: int
    config: dict
    params: dict[str, np.ndarray]
    optimizer: dict | None
    rng: dict | None
    best_val_com_f1: float


def _to_numpy_tree(value: Any) -> Any:
    if isinstance(value, torch.Tensor):
        return value.detach().cpu().numpy().copy()
    if isinstance(value, dict):
        return {k: _to_numpy_tree(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        converted = [_to_numpy_tree(v) for v in value]
        return type(value)(converted) if isinstance(value, tuple) else converted
    return value


def _to_torch_tree(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return torch.from_numpy(value.copy())
    if isinstance(value, dict):
        return {k: _to_torch_tree(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        converted = [_to_torch_tree(v) for v in value]
        return type(value)(converted) if isinstance(value, tuple) else converted
    return value


def _canonicalize(value: Any) -> Any:
    """Rebuild containers and intern strings so equal payloads pickle to equal bytes.

    Pickle memoizes by object identity; without this, a value-identical
    payload assembled from unpickled (non-interned) strings would serialize
    differently from one assembled from fresh code literals.
    """
    if isinstance(value, str):
        return sys.intern(value)
    if isinstance(value, dict):
        return {_canonicalize(k): _canonicalize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        rebuilt = [_canonicalize(v) for v in value]
        return tuple(rebuilt) if isinstance(value, tuple) else rebuilt
    return value


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    payload = _canonicalize(
        {
            "format_version": FORMAT_VERSION,
            "step": checkpoint.step,
            "config": checkpoint.config,
            "params": checkpoint.params,
            "optimizer": checkpoint.optimizer,
            "rng": checkpoint.rng,
            "best_val_com_f1": checkpoint.best_val_com_f1,
        }
    )
    Path(path).write_bytes(pickle.dumps(payload, protocol=4))


def load_checkpoint(path: str | Path) -> Checkpoint:
    payload = pickle.loads(Path(path).read_bytes())
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigurationError(
            f"unsupported checkpoint format version {version!r} in {path}"
        )
    return Checkpoint(
        step=payload["step"],
        config=payload["config"],
        params=payload["params"],
        optimizer=payload["optimizer"],
        rng=payload["rng"],
        best_val_com_f1=payload["best_val_com_f1"],
    )


def snapshot_net(net: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in net.state_dict().items()}


def restore_net(net: torch.nn.Module, params: dict[str, np.ndarray]) -> None:
    net.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in params.items()})


def snapshot_optimizer(optimizer: torch.optim.Optimizer) -> dict:
    return _to_numpy_tree(optimizer.state_dict())


def restore_optimizer(optimizer: torch.optim.Optimizer, state: dict) -> None:
    optimizer.load_state_dict(_to_torch_tree(state))


def snapshot_rng(rng: np.random.Generator) -> dict:
    return {
        "numpy": rng.bit_generator.state,
        "torch": torch.get_rng_state().numpy().copy(),
    }


def restore_rng(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state["numpy"]
    torch.set_rng_state(torch.from_numpy(state["torch"].copy()))
    return rng


def model_config_from_dict(d: dict) -> ModelConfig:
    return ModelConfig(
        backbone_stage_channels=tuple(d["backbone_stage_channels"]),
        erb_channels=d["erb_channels"],
        da_reduced_channels=d["da_reduced_channels"],
        input_size=d["input_size"],
        seed=d["seed"],
    )


def net_from_checkpoint(checkpoint: Checkpoint) -> TwoBranchNet:
    """Rebuild the network described by a checkpoint's config echo and load its weights."""
    try:
        model_cfg = model_config_from_dict(checkpoint.config["model"])
    except KeyError as exc:
        raise ConfigurationError(f"checkpoint config echo is incomplete: {exc}") from exc
    net = TwoBranchNet(model_cfg)
    restore_net(net, checkpoint.params)
    return net
