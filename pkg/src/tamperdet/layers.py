"""Constrained, fixed and residual convolution layers used by both branches."""
from __future__ import annotations

import warnings

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ConfigurationError

PROB_EPS = 1e-6

_SOBEL_GX = torch.tensor(
    [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]
)
_SOBEL_GY = torch.tensor(
    [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]]
)

_CENTER = 12  # flat index of (2, 2) in a 5x5 kernel


def bayar_project(weight: Tensor) -> Tensor:
    """Project a bank of 5x5 kernels onto the constrained manifold.

    For every (out, in) slice the center tap becomes exactly -1 and the 24
    off-center taps are rescaled so they sum to +1. Slices whose off-center
    sum is numerically zero cannot be rescaled; they are reset to a uniform
    1/24 fill and a warning is emitted. The projection is idempotent.
    """
    if weight.ndim != 4 or weight.shape[-2:] != (5, 5):
        raise ConfigurationError(
            f"constrained kernels must have shape (out, in, 5, 5), got {tuple(weight.shape)}"
        )
    # float64 arithmetic keeps the off-center sum within 1e-5 of +1 even
    # after rounding the result back to float32
    flat = weight.reshape(*weight.shape[:2], 25).to(torch.float64)
    off_sum = flat.sum(dim=-1) - flat[..., _CENTER]
    degenerate = off_sum.abs() < 1e-12
    if bool(degenerate.any()):
        warnings.warn(
            f"{int(degenerate.sum())} constrained kernel slice(s) had zero off-center "
            "sum; reinitialized uniformly to 1/24",
            RuntimeWarning,
            stacklevel=2,
        )
    scale = torch.where(degenerate, torch.ones_like(off_sum), off_sum)
    flat = flat / scale.unsqueeze(-1)
    flat = torch.where(
        degenerate.unsqueeze(-1), torch.full_like(flat, 1.0 / 24.0), flat
    )
    flat[..., _CENTER] = -1.0
    return flat.reshape(weight.shape).to(weight.dtype)


def bayar_constraint_errors(weight: Tensor) -> tuple[float, float]:
    """Return (max |center + 1|, max |off-center sum - 1|) over all slices."""
    flat = weight.detach().reshape(*weight.shape[:2], 25)
    center_err = (flat[..., _CENTER] + 1.0).abs().max().item()
    off_sum = flat.sum(dim=-1) - flat[..., _CENTER]
    sum_err = (off_sum - 1.0).abs().max().item()
    return center_err, sum_err


class BayarConv2d(nn.Module):
    """5x5 constrained convolution that suppresses image content.

    The constraint (center -1, off-center weights summing to +1) turns each
    kernel into a prediction-error filter: constant regions map to zero and
    only local noise residuals pass through. No bias term, stride 1,
    replicate padding. Re-project after every optimizer step to keep the
    constraint tight.
    """

    def __init__(self, in_channels: int = 3, out_channels: int = 3) -> None:
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, 5, 5))
        # positive init: the projection rescales to sum +1 anyway, and a
        # comfortably positive off-center sum keeps it well conditioned
        nn.init.uniform_(self.weight, 0.0, 1.0)
        self.project_()

    def project_(self) -> None:
        with torch.no_grad():
            self.weight.copy_(bayar_project(self.weight))

    def forward(self, x: Tensor) -> Tensor:
        padded = F.pad(x, (2, 2, 2, 2), mode="replicate")
        return F.conv2d(padded, self.weight)


class SobelLayer(nn.Module):
    """Fixed depthwise Sobel filter returning the gradient magnitude.

    Applies the standard 3x3 Gx/Gy kernels per channel (replicate padding)
    and returns sqrt(gx^2 + gy^2 + eps); eps keeps the square root
    differentiable at zero-gradient pixels.
    """

    def __init__(self, eps: float = 1e-8) -> None:
        super().__init__()
        self.eps = eps
        self.register_buffer("gx", _SOBEL_GX.reshape(1, 1, 3, 3))
        self.register_buffer("gy", _SOBEL_GY.reshape(1, 1, 3, 3))

    def forward(self, x: Tensor) -> Tensor:
        channels = x.shape[1]
        padded = F.pad(x, (1, 1, 1, 1), mode="replicate")
        gx = F.conv2d(padded, self.gx.expand(channels, 1, 3, 3), groups=channels)
        gy = F.conv2d(padded, self.gy.expand(channels, 1, 3, 3), groups=channels)
        return torch.sqrt(gx * gx + gy * gy + self.eps)


def _group_count(channels: int) -> int:
    for groups in (4, 2, 1):
        if channels % groups == 0:
            return groups
    return 1


class EdgeResidualBlock(nn.Module):
    """Residual refinement block for the edge stream.

    transform: 3x3 conv -> GroupNorm -> ReLU -> 3x3 conv; skip: identity when
    the channel count is unchanged, otherwise a 1x1 projection. Output is
    transform(x) + project(x) with no trailing activation.
    """

    def __init__(self, in_channels: int, out_channels: int) -> None:
        super().__init__()
        self.transform = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 3, padding=1, bias=False),
            nn.GroupNorm(_group_count(out_channels), out_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, 3, padding=1),
        )
        if in_channels == out_channels:
            self.project: nn.Module = nn.Identity()
        else:
            self.project = nn.Conv2d(in_channels, out_channels, 1, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        return self.transform(x) + self.project(x)
