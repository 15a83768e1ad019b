"""Restoration quality metrics: PSNR (dB) and mean local SSIM."""

import math

import torch
import torch.nn.functional as F

PSNR_CAP_DB = 100.0
_MSE_FLOOR = 1e-10

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(pred: torch.Tensor, target: torch.Tensor, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE), capped at 100 dB for near-exact matches."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    mse = float(((pred.double() - target.double()) ** 2).mean())
    if mse < _MSE_FLOOR:
        return PSNR_CAP_DB
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int, sigma: float, dtype, device) -> torch.Tensor:
    half = (size - 1) / 2
    coords = torch.arange(size, dtype=dtype, device=device) - half
    g = torch.exp(-(coords ** 2) / (2 * sigma * sigma))
    g = g / g.sum()
    return (g[:, None] * g[None, :]).reshape(1, 1, size, size)


def ssim(pred: torch.Tensor, target: torch.Tensor, peak: float = 1.0) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Local statistics use Gaussian weighting without sample-covariance
    correction; the map is averaged over the valid (unpadded) region and all
    channels. Accepts (H, W), (C, H, W) or (B, C, H, W) tensors.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    x = pred.double().reshape(-1, 1, *pred.shape[-2:])
    y = target.double().reshape(-1, 1, *target.shape[-2:])
    if min(x.shape[-2], x.shape[-1]) < SSIM_WINDOW:
        raise ValueError(f"images smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA, x.dtype, x.device)

    mu_x = F.conv2d(x, win)
    mu_y = F.conv2d(y, win)
    xx = F.conv2d(x * x, win) - mu_x * mu_x
    yy = F.conv2d(y * y, win) - mu_y * mu_y
    xy = F.conv2d(x * y, win) - mu_x * mu_y

    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (xx + yy + c2)
    return float((num / den).mean())
