"""Four-stage residual backbone with output strides 4, 8, 16, 16."""
from __future__ import annotations

from torch import Tensor, nn

from .layers import _group_count

STAGE_STRIDES = (4, 8, 16, 16)


class ResidualBlock(nn.Module):
    def __init__(
        self, in_channels: int, out_channels: int, stride: int = 1, dilation: int = 1
    ) -> None:
        super().__init__()
        self.conv1 = nn.Conv2d(
            in_channels,
            out_channels,
            3,
            stride=stride,
            padding=dilation,
            dilation=dilation,
            bias=False,
        )
        self.norm1 = nn.GroupNorm(_group_count(out_channels), out_channels)
        self.conv2 = nn.Conv2d(
            out_channels, out_channels, 3, padding=dilation, dilation=dilation, bias=False
        )
        self.norm2 = nn.GroupNorm(_group_count(out_channels), out_channels)
        self.act = nn.ReLU(inplace=True)
        if in_channels != out_channels or stride != 1:
            self.skip: nn.Module = nn.Conv2d(
                in_channels, out_channels, 1, stride=stride, bias=False
            )
        else:
            self.skip = nn.Identity()

    def forward(self, x: Tensor) -> Tensor:
        out = self.act(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return self.act(out + self.skip(x))


class Backbone(nn.Module):
    """Stem (stride 2) plus four residual stages.

    Stages 1-3 halve the resolution; stage 4 keeps stride 16 and uses
    dilation 2 so the deep features stay at 1/16 of the input (FCN-16 style).
    forward() returns the features of all four stages.
    """

    def __init__(
        self,
        stage_channels: tuple[int, int, int, int] = (16, 32, 64, 64),
        in_channels: int = 3,
    ) -> None:
        super().__init__()
        c1, c2, c3, c4 = stage_channels
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, c1, 3, stride=2, padding=1, bias=False),
            nn.GroupNorm(_group_count(c1), c1),
            nn.ReLU(inplace=True),
        )
        self.stage1 = nn.Sequential(ResidualBlock(c1, c1, stride=2), ResidualBlock(c1, c1))
        self.stage2 = nn.Sequential(ResidualBlock(c1, c2, stride=2), ResidualBlock(c2, c2))
        self.stage3 = nn.Sequential(ResidualBlock(c2, c3, stride=2), ResidualBlock(c3, c3))
        self.stage4 = nn.Sequential(
            ResidualBlock(c3, c4, stride=1, dilation=2),
            ResidualBlock(c4, c4, stride=1, dilation=2),
        )
        self.stage_channels = tuple(stage_channels)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        f0 = self.stem(x)
        f1 = self.stage1(f0)
        f2 = self.stage2(f1)
        f3 = self.stage3(f2)
        f4 = self.stage4(f3)
        return f1, f2, f3, f4
