"""Supervision at three scales: pixel Dice, quarter-scale edge Dice, image BCE."""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor

from .errors import ConfigurationError, ContractViolationError, InputError
from .layers import PROB_EPS
from .model import Prediction


@dataclass(frozen=True)
class LossWeights:
    """Convex combination weights; the edge term gets 1 - alpha - beta."""

    alpha: float = 0.16
    beta: float = 0.04

    @property
    def edge(self) -> float:
        return 1.0 - self.alpha - self.beta

    def validate(self) -> None:
        if not (0.0 < self.alpha < 1.0) or not (0.0 < self.beta < 1.0):
            raise ConfigurationError(
                f"alpha and beta must lie in (0, 1), got alpha={self.alpha} beta={self.beta}"
            )
        if self.alpha + self.beta >= 1.0:
            raise ConfigurationError(
                f"alpha + beta must be < 1 so the edge weight stays positive, "
                f"got {self.alpha + self.beta}"
            )


@dataclass
class SampleLabel:
    """Batched supervision targets.

    mask: (B, H, W) binary pixel labels; edge_label: (B, H/4, W/4) binary
    boundary labels; image_label: (B,) with y = max over the mask.
    """

    mask: Tensor
    edge_label: Tensor
    image_label: Tensor


def _dice_per_sample(pred: Tensor, target: Tensor) -> Tensor:
    num = 2.0 * (pred * target).flatten(1).sum(dim=1)
    den = (pred * pred).flatten(1).sum(dim=1) + (target * target).flatten(1).sum(dim=1)
    return 1.0 - num / den


def dice_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Dice loss 1 - 2*sum(p*y) / (sum(p^2) + sum(y^2)) for one map pair.

    The target must contain at least one positive pixel; Dice is undefined
    on empty masks, so authentic samples must never reach this loss.
    """
    if pred.shape != target.shape:
        raise InputError(
            f"pred/target shapes differ: {tuple(pred.shape)} vs {tuple(target.shape)}"
        )
    if not bool((target > 0).any()):
        raise ContractViolationError("dice_loss requires a target with positive pixels")
    return _dice_per_sample(pred.reshape(1, -1), target.reshape(1, -1))[0]


def edge_loss(edge_pred: Tensor, edge_label: Tensor) -> Tensor:
    """Dice loss on the quarter-resolution edge pair."""
    return dice_loss(edge_pred, edge_label)


def clf_loss(score: Tensor, y: Tensor) -> Tensor:
    """Image-scale binary cross-entropy on the pooled manipulation score."""
    s = score.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(y * torch.log(s) + (1.0 - y) * torch.log(1.0 - s))


def combined_loss(pred: Prediction, label: SampleLabel, weights: LossWeights) -> Tensor:
    """Batch-mean convex combination of the three supervision scales.

    Manipulated samples contribute alpha*seg + beta*clf + (1-alpha-beta)*edge;
    authentic samples contribute only beta*clf, with the segmentation and
    edge terms absent from their computation graph entirely (zero gradient).
    """
    weights.validate()
    y = label.image_label.to(pred.image_score.dtype)
    per_sample = weights.beta * clf_loss(pred.image_score, y)
    manipulated = label.image_label > 0.5
    if bool(manipulated.any()):
        seg_term = _dice_per_sample(
            pred.seg_map[manipulated], label.mask[manipulated].to(pred.seg_map.dtype)
        )
        edge_term = _dice_per_sample(
            pred.edge_map[manipulated],
            label.edge_label[manipulated].to(pred.edge_map.dtype),
        )
        extra = torch.zeros_like(per_sample)
        extra[manipulated] = weights.alpha * seg_term + weights.edge * edge_term
        per_sample = per_sample + extra
    return per_sample.mean()


def loss_components(
    pred: Prediction, label: SampleLabel, weights: LossWeights
) -> dict[str, float]:
    """Unweighted per-term means for logging; not part of the training graph."""
    with torch.no_grad():
        y = label.image_label.to(pred.image_score.dtype)
        out = {"clf": clf_loss(pred.image_score, y).mean().item()}
        manipulated = label.image_label > 0.5
        if bool(manipulated.any()):
            out["seg"] = _dice_per_sample(
                pred.seg_map[manipulated],
                label.mask[manipulated].to(pred.seg_map.dtype),
            ).mean().item()
            out["edge"] = _dice_per_sample(
                pred.edge_map[manipulated],
                label.edge_label[manipulated].to(pred.edge_map.dtype),
            ).mean().item()
        else:
            out["seg"] = 0.0
            out["edge"] = 0.0
        out["total"] = combined_loss(pred, label, weights).item()
    return out
