"""Differentiable building blocks and the encoder/decoder pair.

Layout notes:
  - tensors are channel-first (batch, channels, antenna, subcarrier)
  - three stride-2 stages take (N, M) to (N/8, M/8); the decoder mirrors them
  - no normalization layers anywhere, so single-sample inference and batched
    inference agree exactly and forward passes are pure functions
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

FULL_SCALE_STAGE_CHANNELS = (64, 64, 128, 128)


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture hyperparameters.

    stage_channels: (C1, C2, C3, C4) widths of the stem and the three
    downsampling stages. The default is the desk-scale configuration; the
    full-scale configuration is FULL_SCALE_STAGE_CHANNELS.
    """

    stage_channels: tuple = (8, 8, 16, 32)
    kernel_size: int = 3
    activation: str = "relu"
    cb: int = 32
    block_expansion: int = 4

    def __post_init__(self):
        if len(self.stage_channels) != 4 or any(c < 1 for c in self.stage_channels):
            raise ValueError("stage_channels must be four positive integers")
        if self.kernel_size != 3:
            raise ValueError("only 3x3 spatial kernels are supported")
        if self.activation != "relu":
            raise ValueError("only relu activation is supported")
        if self.cb < 1:
            raise ValueError("cb must be >= 1")
        if self.block_expansion < 1:
            raise ValueError("block_expansion must be >= 1")


def conv2d(x, w, b, stride=1, pad=1):
    """Plain cross-correlation with zero padding (functional form for tests)."""
    return F.conv2d(x, w, b, stride=stride, padding=pad)


def transposed_conv2d(x, w, b):
    """Stride-2 transposed convolution that exactly doubles spatial dims
    (kernel 3, padding 1, output padding 1); the adjoint of the stride-2
    conv2d up to the output-padding rows."""
    return F.conv_transpose2d(x, w, b, stride=2, padding=1, output_padding=1)


class LightResBlock(nn.Module):
    """Channel-preserving residual block from two depthwise-separable units.

    y = relu(x + PW2(relu(DW2(relu(PW1(relu(DW1(x))))))))
    with DW = 3x3 depthwise, PW = 1x1 pointwise; PW1 expands the width by
    `expansion`, PW2 projects back. Parameter count: 2tC^2 + 11C + 11tC.
    """

    def __init__(self, channels, expansion=4):
        super().__init__()
        inner = channels * expansion
        self.dw1 = nn.Conv2d(channels, channels, 3, padding=1, groups=channels)
        self.pw1 = nn.Conv2d(channels, inner, 1)
        self.dw2 = nn.Conv2d(inner, inner, 3, padding=1, groups=inner)
        self.pw2 = nn.Conv2d(inner, channels, 1)

    def forward(self, x):
        y = F.relu(self.dw1(x))
        y = F.relu(self.pw1(y))
        y = F.relu(self.dw2(y))
        y = self.pw2(y)
        return F.relu(x + y)


class Encoder(nn.Module):
    """Stem conv + block, then three [stride-2 conv, block] stages.

    (B, 2, N, M) -> (B, C4, N/8, M/8).
    """

    def __init__(self, cfg):
        super().__init__()
        c1, c2, c3, c4 = cfg.stage_channels
        t = cfg.block_expansion
        self.stem = nn.Conv2d(2, c1, 3, padding=1)
        self.stem_block = LightResBlock(c1, t)
        self.down = nn.ModuleList(
            [nn.Conv2d(cin, cout, 3, stride=2, padding=1)
             for cin, cout in ((c1, c2), (c2, c3), (c3, c4))]
        )
        self.stage_blocks = nn.ModuleList([LightResBlock(c, t) for c in (c2, c3, c4)])

    def forward(self, x):
        if x.shape[-2] % 8 or x.shape[-1] % 8:
            raise ValueError(f"spatial dims must be divisible by 8, got {tuple(x.shape[-2:])}")
        y = self.stem_block(F.relu(self.stem(x)))
        for down, block in zip(self.down, self.stage_blocks):
            y = block(F.relu(down(y)))
        return y


class Decoder(nn.Module):
    """1x1 restore conv, three [transposed conv, block] upsampling stages,
    3x3 head, sigmoid. (B, in_channels, N/8, M/8) -> (B, 2, N, M) in (0,1)."""

    def __init__(self, cfg, in_channels):
        super().__init__()
        c1, c2, c3, c4 = cfg.stage_channels
        t = cfg.block_expansion
        self.restore = nn.Conv2d(in_channels, c4, 1)
        self.up = nn.ModuleList(
            [nn.ConvTranspose2d(cin, cout, 3, stride=2, padding=1, output_padding=1)
             for cin, cout in ((c4, c3), (c3, c2), (c2, c1))]
        )
        self.stage_blocks = nn.ModuleList([LightResBlock(c, t) for c in (c3, c2, c1)])
        self.head = nn.Conv2d(c1, 2, 3, padding=1)

    def forward(self, z):
        y = F.relu(self.restore(z))
        for up, block in zip(self.up, self.stage_blocks):
            y = block(F.relu(up(y)))
        return torch.sigmoid(self.head(y))


class FixedRateHead(nn.Module):
    """3x3 conv squeezing the latent to exactly C_t codeword channels."""

    def __init__(self, cfg, c_t):
        super().__init__()
        if not 1 <= c_t <= 128:
            raise ValueError(f"fixed-rate c_t must be in [1, 128], got {c_t}")
        self.conv = nn.Conv2d(cfg.stage_channels[3], c_t, 3, padding=1)

    def forward(self, latent):
        return self.conv(latent)


class FixedRateCodec(nn.Module):
    """Single-rate autoencoder: one trained model per compression ratio."""

    def __init__(self, cfg, c_t):
        super().__init__()
        self.c_t = c_t
        self.encoder = Encoder(cfg)
        self.rate_head = FixedRateHead(cfg, c_t)
        self.decoder = Decoder(cfg, in_channels=c_t)

    def encode(self, x):
        return self.rate_head(self.encoder(x))

    def forward(self, x):
        return self.decoder(self.encode(x))
