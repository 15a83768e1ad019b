"""Full restoration network: shallow stem, five-scale encoder (frozen after
pretraining), stacked sub-decoders, and per-sub-decoder residual image heads.

Feature lists are indexed finest-first: index 0 is full resolution with
base_channels channels, index i halves the spatial size and doubles the
width of index i-1.
"""

import math
from dataclasses import replace

import torch
import torch.nn as nn
import torch.nn.functional as F

from .blocks_frequency import HFSBlock
from .blocks_spatial import SFDHBlock, LayerNorm2d
from .config import ConfigError, ModelConfig


def _baseline_block(width: int, cfg: ModelConfig) -> SFDHBlock:
    return SFDHBlock(width, ffn_expansion=cfg.ffn_expansion, use_sfem=False)


class Downsample(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, 2 * channels, 2, stride=2, bias=True)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    """Learned 2x upsampling: widen to 2C, then trade channels for space."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv = nn.Conv2d(channels, 2 * channels, 1, bias=True)
        self.shuffle = nn.PixelShuffle(2)

    def forward(self, x):
        return self.shuffle(self.conv(x))


class Encoder(nn.Module):
    """Stem plus five scales of baseline blocks with stride-2 transitions."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.stem = nn.Conv2d(3, cfg.base_channels, 3, padding=1, bias=True)
        self.levels = nn.ModuleList()
        self.downs = nn.ModuleList()
        for i in range(cfg.scales):
            width = cfg.width(i + 1)
            self.levels.append(
                nn.Sequential(*[_baseline_block(width, cfg) for _ in range(cfg.enc_blocks_per_level)])
            )
            if i < cfg.scales - 1:
                self.downs.append(Downsample(width))

    def forward(self, image):
        shallow = self.stem(image)
        feats = []
        x = shallow
        for i, level in enumerate(self.levels):
            x = level(x)
            feats.append(x)
            if i < len(self.downs):
                x = self.downs[i](x)
        return shallow, feats


class SubDecoder(nn.Module):
    """One decoder pass over all five scales, coarsest to finest.

    At the coarsest scale the incoming feature is fused with the encoder
    skip; at finer scales the upsampled carry, the previous stage's feature
    at that scale, and the encoder skip are concatenated and reduced by a
    1x1 conv. Each scale then runs N SFDHBlocks and (optionally) an
    HFSBlock. The finest-scale feature feeds a residual image head.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.scales = cfg.scales
        self.fuse = nn.ModuleList()
        self.stages = nn.ModuleList()
        self.hfs = nn.ModuleList()
        self.ups = nn.ModuleList()
        for i in range(cfg.scales):
            width = cfg.width(i + 1)
            n_in = 2 if i == cfg.scales - 1 else 3
            self.fuse.append(nn.Conv2d(n_in * width, width, 1, bias=True))
            self.stages.append(
                nn.Sequential(
                    *[
                        SFDHBlock(
                            width,
                            ffn_expansion=cfg.ffn_expansion,
                            alpha_init=cfg.alpha_init,
                            use_sfem=cfg.enable_sfem,
                            split_mode=cfg.sfem_split_mode,
                        )
                        for _ in range(cfg.blocks_per_level)
                    ]
                )
            )
            wants_hfs = cfg.enable_hfs and (cfg.hfs_every_scale or i == 0)
            self.hfs.append(
                HFSBlock(width, cfg.n_masks, cfg.decoupler_kernel, cfg.mask_mode)
                if wants_hfs
                else None
            )
            if i > 0:
                self.ups.append(Upsample(width))
            else:
                self.ups.append(None)
        self.head = nn.Conv2d(cfg.width(1), 3, 3, padding=1, bias=True)

    def forward(self, prev, skips, image):
        if len(prev) != self.scales or len(skips) != self.scales:
            raise ConfigError(
                f"expected {self.scales} feature scales, got {len(prev)} and {len(skips)}"
            )
        feats = [None] * self.scales
        carry = None
        for i in reversed(range(self.scales)):
            if i == self.scales - 1:
                x = self.fuse[i](torch.cat([prev[i], skips[i]], dim=1))
            else:
                x = self.fuse[i](torch.cat([carry, prev[i], skips[i]], dim=1))
            x = self.stages[i](x)
            if self.hfs[i] is not None:
                x = self.hfs[i](x)
            feats[i] = x
            if i > 0:
                carry = self.ups[i](x)
        residual = self.head(feats[0])
        return feats, image + residual


class AIBNet(nn.Module):
    """Frozen-encoder restoration network with s chained sub-decoders, each
    emitting its own restored image (input + predicted residual)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.sub_decoders = nn.ModuleList(SubDecoder(cfg) for _ in range(cfg.sub_decoders))

    def forward(self, image):
        _, skips = self.encoder(image)
        prev = skips
        restored = []
        for sub in self.sub_decoders:
            prev, out = sub(prev, skips, image)
            restored.append(out)
        return restored


class PretrainModel(nn.Module):
    """Encoder plus a throwaway baseline decoder; only used to pretrain the
    encoder end to end before it is frozen."""

    def __init__(self, cfg: ModelConfig, encoder: Encoder, decoder: SubDecoder):
        super().__init__()
        self.encoder = encoder
        self.decoder = decoder

    def forward(self, image):
        _, skips = self.encoder(image)
        _, out = self.decoder(skips, skips, image)
        return out


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministic initialization: fan-in-scaled uniform conv weights and
    zero biases drawn from a dedicated generator, residual heads zeroed so a
    fresh model is the identity restoration. Scalar parameters keep the
    values given at construction time."""
    gen = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.weight.shape[1] * m.weight.shape[2] * m.weight.shape[3]
            bound = 1.0 / math.sqrt(fan_in)
            with torch.no_grad():
                # draw in float32 for a dtype-independent stream, then cast
                w = torch.empty(m.weight.shape, dtype=torch.float32)
                w.uniform_(-bound, bound, generator=gen)
                m.weight.copy_(w)
                if m.bias is not None:
                    m.bias.zero_()
    for m in module.modules():
        if isinstance(m, SubDecoder):
            with torch.no_grad():
                m.head.weight.zero_()
                m.head.bias.zero_()


_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def build_model(cfg: ModelConfig, seed: int, precision: str = "float32") -> AIBNet:
    if precision not in _DTYPES:
        raise ConfigError(f"precision must be one of {sorted(_DTYPES)}, got {precision!r}")
    model = AIBNet(cfg).to(_DTYPES[precision])
    init_parameters(model, seed)
    return model


def build_pretrain_decoder(cfg: ModelConfig, seed: int, precision: str = "float32") -> SubDecoder:
    base = replace(cfg, enable_sfem=False, enable_hfs=False)
    decoder = SubDecoder(base).to(_DTYPES[precision])
    init_parameters(decoder, seed)
    return decoder


def pad_image(image: torch.Tensor, multiple: int = 16):
    """Reflect-pad bottom/right to the next size multiple; returns the padded
    tensor and the original (H, W) for cropping the restored output."""
    h, w = image.shape[-2], image.shape[-1]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return image, (h, w)
    if ph >= h or pw >= w:
        raise ConfigError(f"image {h}x{w} too small to pad to a multiple of {multiple}")
    return F.pad(image, (0, pw, 0, ph), mode="reflect"), (h, w)


def crop_image(image: torch.Tensor, size) -> torch.Tensor:
    h, w = size
    return image[..., :h, :w]
