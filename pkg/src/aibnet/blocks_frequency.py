"""High-frequency path: learnable low-pass decoupler, top-fraction score
masking, and the masked-attention fusion block (HFSBlock)."""

import math

import torch
import torch.nn as nn

from .blocks_spatial import TEMPERATURE_FLOOR
from .config import ConfigError
from .ops import pad_symmetric


class Decoupler(nn.Module):
    """Learnable per-channel low-pass filter; the high band is the residual.

    Each channel owns k*k logits; the effective filter is their softmax, so
    it is nonnegative and sums to exactly 1 (a spatially constant input
    therefore produces a zero high band).
    """

    def __init__(self, channels: int, kernel_size: int = 3):
        super().__init__()
        if kernel_size < 1 or kernel_size % 2 == 0:
            raise ConfigError(f"decoupler kernel size must be odd, got {kernel_size}")
        self.kernel_size = kernel_size
        self.logits = nn.Parameter(torch.zeros(channels, kernel_size, kernel_size))

    def filters(self) -> torch.Tensor:
        """Normalized (C, 1, k, k) filter bank."""
        c, k, _ = self.logits.shape
        flat = torch.softmax(self.logits.reshape(c, k * k), dim=-1)
        return flat.reshape(c, 1, k, k)

    def forward(self, x):
        low = nn.functional.conv2d(
            pad_symmetric(x, self.kernel_size // 2), self.filters().to(x.dtype), groups=x.shape[1]
        )
        return x - low


def keep_count(fraction: float, n: int) -> int:
    """Entries kept per row: ceil(fraction * n), guarded against float
    roundup inflating an exact product."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    return max(1, math.ceil(fraction * n - 1e-9))


def _row_ranks(scores: torch.Tensor) -> torch.Tensor:
    """Per-row descending rank of each entry (0 = largest); ties are ranked
    by ascending column index."""
    order = torch.argsort(scores, dim=-1, descending=True, stable=True)
    ranks = torch.empty_like(order)
    ranks.scatter_(
        -1, order, torch.arange(scores.shape[-1], device=scores.device).expand_as(order)
    )
    return ranks


def mask_top_fraction(scores: torch.Tensor, fraction: float) -> torch.Tensor:
    """Keep the ceil(fraction * n) largest entries of each row, set the rest
    to -inf so they drop out of a subsequent row softmax.

    Ties are broken by keeping the lowest column index first. Works on any
    (..., n, n) stack of score matrices.
    """
    keep = keep_count(fraction, scores.shape[-1])
    if keep >= scores.shape[-1]:
        return scores
    return scores.masked_fill(_row_ranks(scores) >= keep, float("-inf"))


def mask_zero(scores: torch.Tensor, fraction: float) -> torch.Tensor:
    # literal variant: dropped entries stay in the softmax support with score 0
    keep = keep_count(fraction, scores.shape[-1])
    if keep >= scores.shape[-1]:
        return scores
    return scores.masked_fill(_row_ranks(scores) >= keep, 0.0)


class HFSBlock(nn.Module):
    """High-frequency feature selection block.

    Extracts the high band of its input, forms a C x C channel-attention
    score matrix from it, derives n_masks sparse attention maps that keep the
    top i/(i+1) fraction of each row (i = 1..n_masks), and adds the
    lambda-weighted fusion of their value products back onto the input.
    """

    def __init__(
        self,
        channels: int,
        n_masks: int = 4,
        decoupler_kernel: int = 3,
        mask_mode: str = "exclude",
    ):
        super().__init__()
        if n_masks < 0:
            raise ConfigError(f"n_masks must be >= 0, got {n_masks}")
        if mask_mode not in ("exclude", "zero"):
            raise ConfigError(f"unknown mask mode {mask_mode!r}")
        self.n_masks = n_masks
        self.mask_mode = mask_mode
        self.decoupler = Decoupler(channels, decoupler_kernel)
        self.proj_in = nn.Conv2d(channels, 3 * channels, 1, bias=True)
        self.dw = nn.Conv2d(3 * channels, 3 * channels, 3, padding=1, groups=3 * channels, bias=True)
        self.temperature = nn.Parameter(torch.tensor(math.sqrt(channels)))
        if n_masks > 0:
            self.lambdas = nn.Parameter(torch.full((n_masks,), 1.0 / n_masks))
        else:
            self.lambdas = None
        self.record = None

    def forward(self, x):
        if self.n_masks == 0:
            return x
        b, c, h, w = x.shape
        high = self.decoupler(x)
        q, k, v = self.dw(self.proj_in(high)).chunk(3, dim=1)
        q = q.reshape(b, c, h * w)
        k = k.reshape(b, c, h * w)
        v = v.reshape(b, c, h * w)
        scores = q @ k.transpose(1, 2) / (self.temperature.abs() + TEMPERATURE_FLOOR)
        ranks = _row_ranks(scores)  # one sort shared by all mask fractions
        drop_value = float("-inf") if self.mask_mode == "exclude" else 0.0
        fused = torch.zeros_like(v)
        for i in range(1, self.n_masks + 1):
            keep = keep_count(i / (i + 1), c)
            masked = scores if keep >= c else scores.masked_fill(ranks >= keep, drop_value)
            att = torch.softmax(masked, dim=-1)
            if self.record is not None:
                self.record.setdefault("supports", []).append((ranks < keep).detach())
                self.record.setdefault("attentions", []).append(att.detach())
            fused = fused + self.lambdas[i - 1] * (att @ v)
        if self.record is not None:
            self.record["lambdas"] = self.lambdas.detach().clone()
        return x + fused.reshape(b, c, h, w)
