"""Training loop: Adam with step-decayed LR, constraint re-projection, validation and resume."""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    restore_net,
    restore_optimizer,
    restore_rng,
    save_checkpoint,
    snapshot_net,
    snapshot_optimizer,
    snapshot_rng,
)
from .data import (
    AugmentOps,
    AugmentPolicy,
    DatasetManifest,
    Sample,
    augment,
    load_entry,
    load_samples,
    make_sample,
    map_ordered,
    num_workers_from_env,
    _resize_pair,
)
from .errors import ConfigurationError, DivergenceError, EvaluationError
from .losses import LossWeights, SampleLabel, combined_loss, loss_components
from .metrics import MetricsReport, build_report, score_model
from .model import ModelConfig, TwoBranchNet

LAST_CHECKPOINT = "last.ckpt"
BEST_CHECKPOINT = "best.ckpt"
TRAIN_LOG = "training_log.jsonl"


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    lr_start: float = 1e-4
    lr_floor: float = 1e-7
    decay_factor: float = 0.1
    decay_period: int = 1000
    batch_size: int = 8
    max_steps: int = 500
    seed: int = 0
    grad_clip: float = 5.0
    val_period: int = 100
    augment: AugmentPolicy | None = field(default_factory=AugmentPolicy)

    def validate(self) -> None:
        self.model.validate()
        self.loss_weights.validate()
        if not self.lr_floor < self.lr_start:
            raise ConfigurationError(
                f"lr_floor ({self.lr_floor}) must be below lr_start ({self.lr_start})"
            )
        if not 0.0 < self.decay_factor < 1.0:
            raise ConfigurationError(
                f"decay_factor must lie in (0, 1), got {self.decay_factor}"
            )
        if self.decay_period <= 0 or self.batch_size <= 0 or self.max_steps < 0:
            raise ConfigurationError("decay_period/batch_size/max_steps must be positive")
        if self.val_period <= 0:
            raise ConfigurationError("val_period must be positive")


def learning_rate(config: TrainConfig, step: int) -> float:
    """LR used for (0-indexed) step: geometric decay every decay_period steps, floored."""
    return max(
        config.lr_start * config.decay_factor ** (step // config.decay_period),
        config.lr_floor,
    )


def config_to_dict(config: TrainConfig) -> dict:
    return dataclasses.asdict(config)


def config_from_dict(d: dict) -> TrainConfig:
    model = ModelConfig(
        **{**d["model"], "backbone_stage_channels": tuple(d["model"]["backbone_stage_channels"])}
    )
    weights = LossWeights(**d["loss_weights"])
    policy = AugmentPolicy(**d["augment"]) if d.get("augment") else None
    scalars = {
        k: d[k]
        for k in (
            "lr_start",
            "lr_floor",
            "decay_factor",
            "decay_period",
            "batch_size",
            "max_steps",
            "seed",
            "grad_clip",
            "val_period",
        )
    }
    return TrainConfig(model=model, loss_weights=weights, augment=policy, **scalars)


_CONFIG_KEYS = {
    "input_size": int,
    "backbone_stage_channels": str,
    "erb_channels": int,
    "da_reduced_channels": int,
    "seed": int,
    "alpha": float,
    "beta": float,
    "lr_start": float,
    "lr_floor": float,
    "decay_factor": float,
    "decay_period": int,
    "batch_size": int,
    "max_steps": int,
    "grad_clip": float,
    "val_period": int,
    "augment": str,
    "flip_prob": float,
    "blur_prob": float,
    "blur_sigma_max": float,
    "jpeg_prob": float,
    "jpeg_quality_min": int,
    "jpeg_quality_max": int,
}


def load_train_config(path: str | Path) -> TrainConfig:
    """Parse a key=value config file (see _CONFIG_KEYS for the accepted keys)."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown config key {key!r}")
        raw[key] = value

    def parse(key: str, default):
        if key not in raw:
            return default
        try:
            return _CONFIG_KEYS[key](raw[key])
        except ValueError as exc:
            raise ConfigurationError(f"bad value for {key}: {raw[key]!r}") from exc

    channels = tuple(
        int(c) for c in raw.get("backbone_stage_channels", "16,32,64,64").split(",")
    )
    if len(channels) != 4:
        raise ConfigurationError(
            f"backbone_stage_channels must list 4 counts, got {channels}"
        )
    seed = parse("seed", 0)
    model = ModelConfig(
        backbone_stage_channels=channels,  # type: ignore[arg-type]
        erb_channels=parse("erb_channels", 16),
        da_reduced_channels=parse("da_reduced_channels", 8),
        input_size=parse("input_size", 128),
        seed=seed,
    )
    weights = LossWeights(alpha=parse("alpha", 0.16), beta=parse("beta", 0.04))
    augment_on = raw.get("augment", "true").lower() in ("1", "true", "yes", "on")
    policy = (
        AugmentPolicy(
            flip_prob=parse("flip_prob", 0.5),
            blur_prob=parse("blur_prob", 0.2),
            blur_sigma_max=parse("blur_sigma_max", 3.0),
            jpeg_prob=parse("jpeg_prob", 0.2),
            jpeg_quality_min=parse("jpeg_quality_min", 50),
            jpeg_quality_max=parse("jpeg_quality_max", 100),
        )
        if augment_on
        else None
    )
    config = TrainConfig(
        model=model,
        loss_weights=weights,
        lr_start=parse("lr_start", 1e-4),
        lr_floor=parse("lr_floor", 1e-7),
        decay_factor=parse("decay_factor", 0.1),
        decay_period=parse("decay_period", 1000),
        batch_size=parse("batch_size", 8),
        max_steps=parse("max_steps", 500),
        seed=seed,
        grad_clip=parse("grad_clip", 5.0),
        val_period=parse("val_period", 100),
        augment=policy,
    )
    config.validate()
    return config


# ---------------------------------------------------------------------------
# sample sources


class ManifestSource:
    """Loads samples from an on-disk manifest, resized to the training size."""

    def __init__(self, manifest: DatasetManifest):
        if not manifest.entries:
            raise ConfigurationError("manifest has no entries")
        self.manifest = manifest

    def __len__(self) -> int:
        return len(self.manifest.entries)

    def get(self, index: int, size: int, ops: AugmentOps | None) -> Sample:
        sample = load_entry(self.manifest, self.manifest.entries[index], size=size)
        return augment(sample, ops) if ops is not None else sample

    def all(self, size: int) -> list[Sample]:
        return load_samples(self.manifest, size=size)


class ArraySource:
    """In-memory images and masks (used by the estimator API)."""

    def __init__(self, images: np.ndarray, masks: np.ndarray):
        if len(images) != len(masks):
            raise ConfigurationError(
                f"got {len(images)} images but {len(masks)} masks"
            )
        if len(images) == 0:
            raise ConfigurationError("need at least one sample")
        self.images = images
        self.masks = masks

    def __len__(self) -> int:
        return len(self.images)

    def get(self, index: int, size: int, ops: AugmentOps | None) -> Sample:
        image, mask = self.images[index], self.masks[index]
        if image.shape[:2] != (size, size):
            image, mask = _resize_pair(
                image.astype(np.float32), (mask > 0).astype(np.uint8), size
            )
        sample = make_sample(image, mask)
        return augment(sample, ops) if ops is not None else sample

    def all(self, size: int) -> list[Sample]:
        return [self.get(i, size, None) for i in range(len(self))]


def collate(samples: Sequence[Sample]) -> tuple[torch.Tensor, SampleLabel]:
    images = torch.from_numpy(
        np.ascontiguousarray(
            np.stack([s.image for s in samples]).transpose(0, 3, 1, 2)
        )
    )
    masks = torch.from_numpy(np.stack([s.mask for s in samples]).astype(np.float32))
    edges = torch.from_numpy(
        np.stack([s.edge_label for s in samples]).astype(np.float32)
    )
    labels = torch.tensor([s.image_label for s in samples], dtype=torch.float32)
    return images, SampleLabel(mask=masks, edge_label=edges, image_label=labels)


# ---------------------------------------------------------------------------
# training


def validate(net: TwoBranchNet, source, config: TrainConfig, mode: str = "fixed") -> MetricsReport:
    """Deterministic validation report; mutates nothing and consumes no RNG."""
    samples = source.all(config.model.input_size)
    scored = score_model(net, samples, batch_size=config.batch_size)
    return build_report(scored, mode=mode)


def _better(candidate: float, incumbent: float) -> bool:
    if math.isnan(candidate):
        return False
    return math.isnan(incumbent) or candidate > incumbent


def train(
    config: TrainConfig,
    train_source,
    val_source=None,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
) -> Checkpoint:
    """Run the optimization loop and return the best (by validation Com-F1) or last checkpoint.

    Writes last.ckpt, best.ckpt and an append-only JSONL training log under
    out_dir when given. Restoring `resume_from` and continuing reproduces
    the uninterrupted run bit-for-bit.
    """
    config.validate()
    if len(train_source) == 0:
        raise ConfigurationError("training source is empty")

    net = TwoBranchNet(config.model)
    params = list(net.parameters())
    optimizer = torch.optim.Adam(params, lr=config.lr_start)
    rng = np.random.default_rng(config.seed)
    start_step = 0
    best_com_f1 = float("nan")

    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        restore_net(net, ckpt.params)
        if ckpt.optimizer is not None:
            restore_optimizer(optimizer, ckpt.optimizer)
        if ckpt.rng is not None:
            rng = restore_rng(ckpt.rng)
        start_step = ckpt.step
        best_com_f1 = ckpt.best_val_com_f1

    out_path = Path(out_dir) if out_dir is not None else None
    log_file = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        log_file = (out_path / TRAIN_LOG).open("a")

    def log(record: dict) -> None:
        if log_file is not None:
            log_file.write(json.dumps(record, sort_keys=True) + "\n")
            log_file.flush()

    def make_snapshot(step: int) -> Checkpoint:
        return Checkpoint(
            step=step,
            config=config_to_dict(config),
            params=snapshot_net(net),
            optimizer=snapshot_optimizer(optimizer),
            rng=snapshot_rng(rng),
            best_val_com_f1=best_com_f1,
        )

    workers = num_workers_from_env()
    size = config.model.input_size
    try:
        for step in range(start_step, config.max_steps):
            lr = learning_rate(config, step)
            for group in optimizer.param_groups:
                group["lr"] = lr
            indices = rng.integers(0, len(train_source), size=config.batch_size)
            if config.augment is not None:
                ops = [config.augment.draw(rng) for _ in range(config.batch_size)]
            else:
                ops = [None] * config.batch_size
            batch = map_ordered(
                lambda pair: train_source.get(int(pair[0]), size, pair[1]),
                list(zip(indices, ops)),
                workers,
            )
            images, labels = collate(batch)
            net.train()
            pred = net(images)
            loss = combined_loss(pred, labels, config.loss_weights)
            if not torch.isfinite(loss):
                diagnostics = {
                    "event": "divergence",
                    "step": step,
                    "lr": lr,
                    "components": loss_components(pred, labels, config.loss_weights),
                }
                log(diagnostics)
                raise DivergenceError(f"non-finite loss at step {step}: {diagnostics}")
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
            optimizer.step()
            net.project_constraints()
            components = loss_components(pred, labels, config.loss_weights)
            log({"event": "step", "step": step, "lr": lr, **{f"loss_{k}": v for k, v in components.items()}})

            completed = step + 1
            if val_source is not None and (
                completed % config.val_period == 0 or completed == config.max_steps
            ):
                try:
                    report = validate(net, val_source, config)
                except EvaluationError as exc:
                    log({"event": "validation_error", "step": step, "error": str(exc)})
                else:
                    log(
                        {
                            "event": "validation",
                            "step": step,
                            "val_pixel_f1": report.pixel_f1,
                            "val_image_f1": report.image_f1,
                            "val_com_f1": report.com_f1,
                            "val_auc": report.auc,
                        }
                    )
                    if _better(report.com_f1, best_com_f1):
                        best_com_f1 = report.com_f1
                        if out_path is not None:
                            save_checkpoint(make_snapshot(completed), out_path / BEST_CHECKPOINT)
            if out_path is not None and (
                completed % config.val_period == 0 or completed == config.max_steps
            ):
                save_checkpoint(make_snapshot(completed), out_path / LAST_CHECKPOINT)
    finally:
        if log_file is not None:
            log_file.close()

    final = make_snapshot(config.max_steps)
    if out_path is not None:
        save_checkpoint(final, out_path / LAST_CHECKPOINT)
        best_file = out_path / BEST_CHECKPOINT
        if not math.isnan(best_com_f1) and best_file.exists():
            return load_checkpoint(best_file)
    return final


def train_from_manifests(
    config: TrainConfig,
    train_manifest: str | Path,
    val_manifest: str | Path | None = None,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
) -> Checkpoint:
    train_source = ManifestSource(DatasetManifest.load(train_manifest))
    val_source = (
        ManifestSource(DatasetManifest.load(val_manifest))
        if val_manifest is not None
        else None
    )
    return train(
        config, train_source, val_source, out_dir=out_dir, resume_from=resume_from
    )
