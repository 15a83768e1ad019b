"""Spatial-domain building blocks.

The core block (SFDHBlock) fuses simple channel attention with a differential
channel-attention module (SFEM) that subtracts two softmax attention maps, so
responses common to both query/key groups cancel out.
"""

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ConfigError

ALPHA_EXP_CLAMP = 20.0
TEMPERATURE_FLOOR = 1e-6


class LayerNorm2d(nn.Module):
    """Layer normalization over the channel dim of a (B, C, H, W) tensor.

    Each spatial location is normalized to zero mean / unit variance across
    its C channels, then scaled and shifted per channel.
    """

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.scale = nn.Parameter(torch.ones(channels))
        self.shift = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        if x.shape[1] != self.scale.numel():
            raise ConfigError(
                f"layer norm over {self.scale.numel()} channels applied to {x.shape[1]}-channel input"
            )
        mu = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, unbiased=False, keepdim=True)
        y = (x - mu) / torch.sqrt(var + self.eps)
        return y * self.scale.view(1, -1, 1, 1) + self.shift.view(1, -1, 1, 1)


class SimpleGate(nn.Module):
    """Halve the channels by multiplying the first half with the second."""

    def forward(self, x):
        if x.shape[1] % 2:
            raise ConfigError(f"simple gate needs an even channel count, got {x.shape[1]}")
        a, b = x.chunk(2, dim=1)
        return a * b


class SimpleChannelAttention(nn.Module):
    """Global average pool -> pointwise conv -> channel-wise rescale."""

    def __init__(self, channels: int):
        super().__init__()
        self.pw = nn.Conv2d(channels, channels, 1, bias=True)

    def forward(self, x):
        return x * self.pw(x.mean(dim=(2, 3), keepdim=True))


class SFEM(nn.Module):
    """Spatial feature enhancement module: differential channel attention.

    The projected feature is split into two query/key groups plus a value.
    Two row-softmax C x C attention maps are computed over flattened spatial
    positions and subtracted with a learnable weight alpha, so features that
    respond identically in both groups (common-mode content) cancel.
    """

    def __init__(self, channels: int, alpha_init: float = 0.8, split_mode: str = "expand"):
        super().__init__()
        if split_mode == "expand":
            inner = 5 * channels
        elif split_mode == "narrow":
            if channels % 5:
                raise ConfigError(f"narrow split needs channels divisible by 5, got {channels}")
            inner = channels
        else:
            raise ConfigError(f"unknown sfem split mode {split_mode!r}")
        if inner % 5:
            raise ConfigError(f"projection width {inner} is not divisible into five parts")
        self.part = inner // 5
        self.proj_in = nn.Conv2d(channels, inner, 1, bias=True)
        self.dw = nn.Conv2d(inner, inner, 3, padding=1, groups=inner, bias=True)
        # bias-free: a zero attention product must map to an exactly-zero output
        self.proj_out = nn.Conv2d(self.part, channels, 1, bias=False)
        self.temperature = nn.Parameter(torch.tensor(math.sqrt(channels)))
        self.alpha_q1 = nn.Parameter(torch.zeros(()))
        self.alpha_k1 = nn.Parameter(torch.zeros(()))
        self.alpha_q2 = nn.Parameter(torch.zeros(()))
        self.alpha_k2 = nn.Parameter(torch.zeros(()))
        self.alpha_init = float(alpha_init)
        # opt-in debug sink for the dump-attn subcommand; None during training
        self.record = None

    def alpha_value(self) -> torch.Tensor:
        a1 = torch.clamp(self.alpha_q1 * self.alpha_k1, -ALPHA_EXP_CLAMP, ALPHA_EXP_CLAMP)
        a2 = torch.clamp(self.alpha_q2 * self.alpha_k2, -ALPHA_EXP_CLAMP, ALPHA_EXP_CLAMP)
        return torch.exp(a1) - torch.exp(a2) + self.alpha_init

    def forward(self, x_n):
        b, _, h, w = x_n.shape
        parts = self.dw(self.proj_in(x_n)).chunk(5, dim=1)
        q1, k1, q2, k2, v = (p.reshape(b, self.part, h * w) for p in parts)
        temp = self.temperature.abs() + TEMPERATURE_FLOOR
        att1 = torch.softmax(q1 @ k1.transpose(1, 2) / temp, dim=-1)
        att2 = torch.softmax(q2 @ k2.transpose(1, 2) / temp, dim=-1)
        alpha = self.alpha_value()
        out = (att1 - alpha * att2) @ v
        if self.record is not None:
            self.record["att1"] = att1.detach()
            self.record["att2"] = att2.detach()
            self.record["alpha"] = float(alpha.detach())
            self.record["temperature"] = float(temp.detach())
        return self.proj_out(out.reshape(b, self.part, h, w))


class SFDHBlock(nn.Module):
    """Spatial feature differential handling block.

    Residual body: input + SCA(LN(input)) + fuse_weight * SFEM(LN(input)),
    followed by a gated FFN (1x1 expand -> depthwise 3x3 -> simple gate ->
    1x1 project) on a second LN, again residual. fuse_weight is a directly
    optimized scalar, initialized to 1.
    """

    def __init__(
        self,
        channels: int,
        ffn_expansion: int = 2,
        alpha_init: float = 0.8,
        use_sfem: bool = True,
        split_mode: str = "expand",
    ):
        super().__init__()
        self.ln1 = LayerNorm2d(channels)
        self.sca = SimpleChannelAttention(channels)
        if use_sfem:
            self.sfem = SFEM(channels, alpha_init=alpha_init, split_mode=split_mode)
            self.fuse_weight = nn.Parameter(torch.tensor(1.0))
        else:
            self.sfem = None
            self.fuse_weight = None
        hidden = ffn_expansion * channels
        self.ln2 = LayerNorm2d(channels)
        self.ffn_in = nn.Conv2d(channels, 2 * hidden, 1, bias=True)
        self.ffn_dw = nn.Conv2d(2 * hidden, 2 * hidden, 3, padding=1, groups=2 * hidden, bias=True)
        self.gate = SimpleGate()
        self.ffn_out = nn.Conv2d(hidden, channels, 1, bias=True)

    def forward(self, x):
        xn = self.ln1(x)
        y = x + self.sca(xn)
        if self.sfem is not None:
            y = y + self.fuse_weight * self.sfem(xn)
        return y + self.ffn_out(self.gate(self.ffn_dw(self.ffn_in(self.ln2(y)))))
