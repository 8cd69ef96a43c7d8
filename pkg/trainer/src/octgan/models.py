"""Partial-volume conditioned U-Net generator and patch discriminator.

Full scale maps a 1024x1024x17 partial volume through five stride-2
encoder blocks (256, 512, 1024, 2048, 2048 filters) to a 32x32x2048
bottleneck and back out to one tanh B-scan; the patch discriminator
scores 126x126 overlapping patches of roughly 8x8 px each. A scale
factor divides the in-plane extent and every filter bank uniformly,
so desk-size variants keep the same shape arithmetic (extent/32
bottleneck, traced patch counts).
"""
from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .exceptions import ArgumentError


def _scaled(spec, what):
    values = tuple(int(f) for f in spec.base_filters)
    if any(f % spec.scale or f < spec.scale for f in values):
        raise ArgumentError(
            f"{what} filter banks {values} do not divide by scale {spec.scale}")
    return tuple(f // spec.scale for f in values)


def _check_common(spec, what, n_banks):
    if int(spec.scale) < 1:
        raise ArgumentError(f"scale must be at least 1, got {spec.scale}")
    if len(spec.base_filters) != n_banks:
        raise ArgumentError(
            f"{what} needs {n_banks} filter banks, got {len(spec.base_filters)}")
    if spec.base_extent % (32 * spec.scale):
        raise ArgumentError(
            f"extent {spec.base_extent}/{spec.scale} is not a multiple of 32")
    if int(spec.channels) < 1:
        raise ArgumentError(f"channels must be at least 1, got {spec.channels}")


@dataclass(frozen=True)
class GeneratorSpec:
    """U-Net geometry; channels is the partial-volume B-scan count."""

    channels: int = 17
    scale: int = 1
    base_extent: int = 1024
    base_filters: tuple = (256, 512, 1024, 2048, 2048)
    dropout: float = 0.5
    dropout_blocks: int = 3

    def __post_init__(self):
        object.__setattr__(self, "channels", int(self.channels))
        object.__setattr__(self, "scale", int(self.scale))
        object.__setattr__(self, "base_extent", int(self.base_extent))
        object.__setattr__(self, "base_filters",
                           tuple(int(f) for f in self.base_filters))
        _check_common(self, "generator", 5)
        _scaled(self, "generator")
        if not 0.0 <= float(self.dropout) < 1.0:
            raise ArgumentError(f"dropout must be in [0, 1), got {self.dropout}")
        if not 0 <= int(self.dropout_blocks) <= 4:
            raise ArgumentError(
                f"dropout_blocks must be in [0, 4], got {self.dropout_blocks}")

    @property
    def extent(self) -> int:
        return self.base_extent // self.scale

    @property
    def filters(self) -> tuple:
        return _scaled(self, "generator")


@dataclass(frozen=True)
class DiscriminatorSpec:
    """Patch classifier geometry; channels counts condition + candidate."""

    channels: int = 18
    scale: int = 1
    base_extent: int = 1024
    base_filters: tuple = (512, 1024, 1024, 2048)

    def __post_init__(self):
        object.__setattr__(self, "channels", int(self.channels))
        object.__setattr__(self, "scale", int(self.scale))
        object.__setattr__(self, "base_extent", int(self.base_extent))
        object.__setattr__(self, "base_filters",
                           tuple(int(f) for f in self.base_filters))
        _check_common(self, "discriminator", 4)
        _scaled(self, "discriminator")
        if self.channels < 2:
            raise ArgumentError(
                f"discriminator needs condition plus candidate channels, "
                f"got {self.channels}")

    @property
    def extent(self) -> int:
        return self.base_extent // self.scale

    @property
    def filters(self) -> tuple:
        return _scaled(self, "discriminator")


def _pad_to_extent(x, extent, what):
    h, w = x.shape[-2:]
    if h > extent or w > extent:
        raise ArgumentError(
            f"{what} extent {h}x{w} exceeds the {extent}x{extent} spec; "
            f"use a smaller scale")
    if (h, w) != (extent, extent):
        x = F.pad(x, (0, extent - w, 0, extent - h))
    return x


# Normalization always draws on the statistics of the tensor at hand,
# never on training-set running averages: the generator is a stochastic
# sampler whose noise (dropout) stays on at test time, and the matching
# convention keeps normalization on the same footing in both phases.
def _norm(channels):
    return nn.BatchNorm2d(channels, track_running_stats=False)


class _EncoderBlock(nn.Module):
    def __init__(self, cin, cout, norm):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 4, 2, 1, bias=not norm)
        self.norm = _norm(cout) if norm else None

    def forward(self, x):
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        return F.leaky_relu(x, 0.2)


class _DecoderBlock(nn.Module):
    def __init__(self, cin, cout, dropout):
        super().__init__()
        self.up = nn.ConvTranspose2d(cin, cout, 4, 2, 1, bias=False)
        self.norm = _norm(cout)
        self.dropout = float(dropout)

    def forward(self, x, noise):
        x = self.norm(self.up(x))
        if self.dropout > 0.0:
            # The noise input z of the conditional GAN: dropout stays
            # active at test time whenever noise is requested.
            x = F.dropout(x, self.dropout, training=noise)
        return F.relu(x)


class UNetGenerator(nn.Module):
    """Maps a (N, channels, extent, extent) block to one tanh B-scan.

    Inputs smaller than the spec extent are zero-padded through the
    network and cropped back, so the output matches the input extent.
    """

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        f = spec.filters
        # No norm on the outer block (raw input scale) nor on the
        # bottleneck, whose 1x1-per-sample statistics are degenerate.
        self.encoder = nn.ModuleList([
            _EncoderBlock(spec.channels, f[0], norm=False),
            _EncoderBlock(f[0], f[1], norm=True),
            _EncoderBlock(f[1], f[2], norm=True),
            _EncoderBlock(f[2], f[3], norm=True),
            _EncoderBlock(f[3], f[4], norm=False),
        ])
        drop = [spec.dropout if i < spec.dropout_blocks else 0.0
                for i in range(4)]
        self.decoder = nn.ModuleList([
            _DecoderBlock(f[4], f[3], drop[0]),
            _DecoderBlock(2 * f[3], f[2], drop[1]),
            _DecoderBlock(2 * f[2], f[1], drop[2]),
            _DecoderBlock(2 * f[1], f[0], drop[3]),
        ])
        self.out = nn.ConvTranspose2d(2 * f[0], 1, 4, 2, 1)

    def forward(self, x, noise=True):
        if x.ndim != 4:
            raise ArgumentError(
                f"generator expects (N, C, H, W) input, got {tuple(x.shape)}")
        if x.shape[1] != self.spec.channels:
            raise ArgumentError(
                f"generator expects {self.spec.channels} input channels, "
                f"got {x.shape[1]}")
        h, w = x.shape[-2:]
        x = _pad_to_extent(x, self.spec.extent, "generator input")
        skips = []
        for block in self.encoder:
            x = block(x)
            skips.append(x)
        for i, block in enumerate(self.decoder):
            x = block(x, noise)
            x = torch.cat([x, skips[3 - i]], dim=1)
        y = torch.tanh(self.out(x))
        return y[:, :, :h, :w]


class PatchDiscriminator(nn.Module):
    """Scores (partial volume, candidate B-scan) pairs patch-wise.

    Three stride-2 blocks, then two padded stride-1 convolutions,
    emitting one logit per overlapping patch: 126x126 at full scale,
    each patch covering roughly 8x8 input pixels.
    """

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        f = spec.filters
        self.blocks = nn.Sequential(
            nn.Conv2d(spec.channels, f[0], 4, 2, 1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(f[0], f[1], 4, 2, 1, bias=False),
            _norm(f[1]),
            nn.LeakyReLU(0.2),
            nn.Conv2d(f[1], f[2], 4, 2, 1, bias=False),
            _norm(f[2]),
            nn.LeakyReLU(0.2),
            nn.ZeroPad2d(1),
            nn.Conv2d(f[2], f[3], 4, 1, bias=False),
            _norm(f[3]),
            nn.LeakyReLU(0.2),
            nn.ZeroPad2d(1),
            nn.Conv2d(f[3], 1, 4, 1),
        )

    def forward(self, pv, candidate):
        if pv.ndim != 4 or candidate.ndim != 4:
            raise ArgumentError("discriminator expects (N, C, H, W) inputs")
        if candidate.shape[1] != 1:
            raise ArgumentError(
                f"candidate must be a single B-scan channel, "
                f"got {candidate.shape[1]}")
        if pv.shape[1] != self.spec.channels - 1:
            raise ArgumentError(
                f"discriminator expects a {self.spec.channels - 1}-channel "
                f"condition, got {pv.shape[1]}")
        if pv.shape[0] != candidate.shape[0] or \
                pv.shape[-2:] != candidate.shape[-2:]:
            raise ArgumentError(
                f"condition {tuple(pv.shape)} and candidate "
                f"{tuple(candidate.shape)} do not align")
        x = torch.cat([pv, candidate], dim=1)
        x = _pad_to_extent(x, self.spec.extent, "discriminator input")
        return self.blocks(x)
