"""Composite restoration loss: Charbonnier + weighted edge (Laplacian) and
frequency (FFT magnitude difference) terms."""

import torch
import torch.nn.functional as F

from .config import LossConfig
from .ops import pad_symmetric

_LAPLACIAN = torch.tensor([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def _check_shapes(pred, target):
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")


def charbonnier(pred, target, epsilon: float = 1e-3, form: str = "mean"):
    """Smooth L1 surrogate sqrt(d^2 + eps^2).

    form "mean" averages the per-element Charbonnier; "global-norm" takes a
    single norm over each sample's whole residual and averages over the batch.
    """
    _check_shapes(pred, target)
    d2 = (pred - target) ** 2
    if form == "mean":
        return torch.sqrt(d2 + epsilon * epsilon).mean()
    if form == "global-norm":
        # one norm per batch sample; unbatched inputs count as one sample
        per_sample = d2.reshape(d2.shape[0], -1).sum(dim=-1) if d2.dim() >= 4 else d2.sum().reshape(1)
        return torch.sqrt(per_sample + epsilon * epsilon).mean()
    raise ValueError(f"unknown loss form {form!r}")


def laplacian(x):
    """Per-channel 4-neighbor Laplacian with edge-mirrored padding."""
    c = x.shape[-3]
    kernel = _LAPLACIAN.to(device=x.device, dtype=x.dtype).expand(c, 1, 3, 3)
    return F.conv2d(pad_symmetric(x, 1), kernel, groups=c)


def edge_loss(pred, target, epsilon: float = 1e-3, form: str = "mean"):
    _check_shapes(pred, target)
    return charbonnier(laplacian(pred), laplacian(target), epsilon, form)


def frequency_loss(pred, target, form: str = "mean"):
    """L1 distance between the unnormalized 2-D DFTs (complex modulus)."""
    _check_shapes(pred, target)
    diff = (torch.fft.fft2(pred) - torch.fft.fft2(target)).abs()
    if form == "mean":
        return diff.mean()
    if form == "global-norm":
        per_sample = diff.reshape(diff.shape[0], -1).sum(dim=-1) if diff.dim() >= 4 else diff.sum().reshape(1)
        return per_sample.mean()
    raise ValueError(f"unknown loss form {form!r}")


def total_loss(pred, target, cfg: LossConfig):
    """Weighted sum of the three terms; components returned for logging."""
    l_c = charbonnier(pred, target, cfg.epsilon, cfg.loss_form)
    l_e = edge_loss(pred, target, cfg.epsilon, cfg.loss_form)
    l_f = frequency_loss(pred, target, cfg.loss_form)
    total = l_c + cfg.delta * l_e + cfg.lambda_f * l_f
    return total, {"charbonnier": l_c, "edge": l_e, "frequency": l_f}
