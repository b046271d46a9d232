"""The two-branch detection network: edge-supervised branch, noise-sensitive branch, attention fusion."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .attention import DualAttentionFusion
from .backbone import Backbone
from .errors import ConfigurationError, InputError
from .layers import PROB_EPS, BayarConv2d, EdgeResidualBlock, SobelLayer


@dataclass
class ModelConfig:
    backbone_stage_channels: tuple[int, int, int, int] = (16, 32, 64, 64)
    erb_channels: int = 16
    da_reduced_channels: int = 8
    input_size: int = 128
    seed: int = 0

    def validate(self) -> None:
        if len(self.backbone_stage_channels) != 4 or any(
            c <= 0 for c in self.backbone_stage_channels
        ):
            raise ConfigurationError(
                "backbone_stage_channels must be 4 positive counts, got "
                f"{self.backbone_stage_channels}"
            )
        if self.erb_channels <= 0 or self.da_reduced_channels <= 0:
            raise ConfigurationError("erb/attention channel counts must be positive")
        if self.input_size <= 0 or self.input_size % 16 != 0:
            raise ConfigurationError(
                f"input_size must be a positive multiple of 16, got {self.input_size}"
            )


class Prediction(NamedTuple):
    """Per-image outputs: full-size segmentation map, quarter-size edge map, scalar score."""

    seg_map: Tensor  # (B, H, W), values in [PROB_EPS, 1 - PROB_EPS]
    edge_map: Tensor  # (B, H/4, W/4), same range
    image_score: Tensor  # (B,), exactly max over seg_map per sample


def check_image_tensor(x: Tensor) -> None:
    """Validate the (B, 3, H, W) network input; H and W must be multiples of 16."""
    if x.ndim != 4 or x.shape[1] != 3:
        raise InputError(f"expected input of shape (B, 3, H, W), got {tuple(x.shape)}")
    if x.shape[-2] % 16 != 0 or x.shape[-1] % 16 != 0:
        raise InputError(
            f"input height/width must be divisible by 16, got {tuple(x.shape[-2:])}"
        )


class TwoBranchNet(nn.Module):
    """Manipulation detector with an edge-supervised and a noise-sensitive branch.

    The edge branch runs the backbone on the RGB input and accumulates
    Sobel-enhanced stage features shallow-to-deep into a stride-4 edge
    stream. The noise branch runs a second backbone on the constrained
    (BayarConv) noise view. Deep features of both branches are fused by dual
    attention into stride-16 logits, bilinearly upsampled and squashed into
    the final segmentation map; the image score is its per-sample maximum.
    """

    def __init__(self, config: ModelConfig | None = None) -> None:
        super().__init__()
        cfg = config if config is not None else ModelConfig()
        cfg.validate()
        self.config = cfg
        # fork_rng keeps construction deterministic per cfg.seed without
        # clobbering the caller's global RNG state
        with torch.random.fork_rng():
            torch.manual_seed(cfg.seed)
            self._build(cfg)

    def _build(self, cfg: ModelConfig) -> None:
        stage_channels = tuple(cfg.backbone_stage_channels)
        deep = stage_channels[3]
        self.edge_backbone = Backbone(stage_channels)
        self.sobel = SobelLayer()
        self.stage_blocks = nn.ModuleList(
            EdgeResidualBlock(c, cfg.erb_channels) for c in stage_channels
        )
        self.combine_blocks = nn.ModuleList(
            [
                EdgeResidualBlock(cfg.erb_channels, cfg.erb_channels),
                EdgeResidualBlock(cfg.erb_channels, cfg.erb_channels),
                EdgeResidualBlock(cfg.erb_channels, 1),
            ]
        )
        self.bayar = BayarConv2d(3, 3)
        self.noise_backbone = Backbone(stage_channels)
        self.fusion = DualAttentionFusion(deep, cfg.da_reduced_channels)

    def esb_forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        """Run the edge branch; returns (stride-16 deep features, stride-4 edge logits)."""
        check_image_tensor(x)
        feats = self.edge_backbone(x)
        target = feats[0].shape[-2:]
        stream: Tensor | None = None
        for i, (feat, block) in enumerate(zip(feats, self.stage_blocks)):
            enhanced = block(self.sobel(feat))
            if enhanced.shape[-2:] != target:
                enhanced = F.interpolate(
                    enhanced, size=target, mode="bilinear", align_corners=False
                )
            if stream is None:
                stream = enhanced
            else:
                stream = self.combine_blocks[i - 1](stream + enhanced)
        assert stream is not None
        return feats[3], stream

    def nsb_forward(self, x: Tensor) -> Tensor:
        """Run the noise branch; returns stride-16 deep features of the noise view."""
        check_image_tensor(x)
        return self.noise_backbone(self.bayar(x))[3]

    def forward(self, x: Tensor) -> Prediction:
        f_edge, edge_logits = self.esb_forward(x)
        f_noise = self.nsb_forward(x)
        logits = self.fusion(f_edge, f_noise)
        seg = torch.sigmoid(
            F.interpolate(logits, scale_factor=16, mode="bilinear", align_corners=False)
        )
        seg = seg.clamp(PROB_EPS, 1.0 - PROB_EPS).squeeze(1)
        edge = torch.sigmoid(edge_logits).clamp(PROB_EPS, 1.0 - PROB_EPS).squeeze(1)
        # global max pooling; ties route the gradient to the first maximal
        # pixel in row-major order
        image_score = seg.flatten(1).max(dim=1).values
        return Prediction(seg_map=seg, edge_map=edge, image_score=image_score)

    def project_constraints(self) -> None:
        """Re-project constrained kernels; call after every optimizer step."""
        self.bayar.project_()

    def edge_head_parameters(self) -> Iterator[nn.Parameter]:
        """Parameters used only by the edge prediction stream."""
        for module in (self.stage_blocks, self.combine_blocks):
            yield from module.parameters()
