"""Dual attention fusion: position and channel self-attention over concatenated branch features."""
from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ConfigurationError


class PositionAttention(nn.Module):
    """Spatial self-attention with reduced query/key channels.

    Each position is updated with a softmax-weighted sum of the values at
    all positions; the residual gain gamma starts at 0 so the module is an
    identity at initialization.
    """

    def __init__(self, channels: int, reduced_channels: int) -> None:
        super().__init__()
        self.query = nn.Conv2d(channels, reduced_channels, 1)
        self.key = nn.Conv2d(channels, reduced_channels, 1)
        self.value = nn.Conv2d(channels, channels, 1)
        self.gamma = nn.Parameter(torch.zeros(()))

    def attention(self, x: Tensor) -> Tensor:
        """Position-to-position weights, shape (B, N, N); rows sum to 1."""
        b = x.shape[0]
        q = self.query(x).flatten(2).permute(0, 2, 1)  # (B, N, r)
        k = self.key(x).flatten(2)  # (B, r, N)
        return F.softmax(torch.bmm(q, k), dim=-1)

    def forward(self, x: Tensor) -> Tensor:
        b, c, h, w = x.shape
        attn = self.attention(x)
        v = self.value(x).flatten(2)  # (B, C, N)
        out = torch.bmm(v, attn.transpose(1, 2)).reshape(b, c, h, w)
        return self.gamma * out + x


class ChannelAttention(nn.Module):
    """Channel self-attention over the C x C Gram matrix.

    Uses the max-minus-energy stabilization before the softmax and a
    zero-initialized residual gain, so it too starts as an identity.
    """

    def __init__(self) -> None:
        super().__init__()
        self.gamma = nn.Parameter(torch.zeros(()))

    def attention(self, x: Tensor) -> Tensor:
        """Channel-to-channel weights, shape (B, C, C); rows sum to 1."""
        flat = x.flatten(2)  # (B, C, N)
        energy = torch.bmm(flat, flat.transpose(1, 2))
        energy = energy.amax(dim=-1, keepdim=True) - energy
        return F.softmax(energy, dim=-1)

    def forward(self, x: Tensor) -> Tensor:
        b, c, h, w = x.shape
        attn = self.attention(x)
        out = torch.bmm(attn, x.flatten(2)).reshape(b, c, h, w)
        return self.gamma * out + x


class DualAttentionFusion(nn.Module):
    """Fuses edge-branch and noise-branch deep features into stride-16 logits.

    The two feature maps are concatenated along channels, passed through
    position attention and channel attention in parallel, summed, and
    reduced to a single-channel logit map by a 1x1 convolution.
    """

    def __init__(self, branch_channels: int, reduced_channels: int = 8) -> None:
        super().__init__()
        self.branch_channels = branch_channels
        channels = 2 * branch_channels
        self.position = PositionAttention(channels, reduced_channels)
        self.channel = ChannelAttention()
        self.head = nn.Conv2d(channels, 1, 1)

    def forward(self, f_edge: Tensor, f_noise: Tensor) -> Tensor:
        if f_edge.shape != f_noise.shape:
            raise ConfigurationError(
                "branch feature shapes differ: "
                f"{tuple(f_edge.shape)} vs {tuple(f_noise.shape)}"
            )
        if f_edge.shape[1] != self.branch_channels:
            raise ConfigurationError(
                f"expected {self.branch_channels} channels per branch, got {f_edge.shape[1]}"
            )
        x = torch.cat([f_edge, f_noise], dim=1)
        return self.head(self.position(x) + self.channel(x))
