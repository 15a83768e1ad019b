"""Small tensor helpers shared across blocks and losses."""

import torch


def pad_symmetric(x: torch.Tensor, pad: int) -> torch.Tensor:
    """Edge-mirrored (half-sample symmetric) padding of the last two dims.

    Unlike torch's 'reflect' mode this repeats the border sample, so it is
    defined all the way down to 1x1 maps as long as pad <= spatial size.
    """
    if pad == 0:
        return x
    h, w = x.shape[-2], x.shape[-1]
    if pad > min(h, w):
        raise ValueError(f"pad {pad} exceeds spatial size {h}x{w}")
    x = torch.cat([x[..., :, :pad].flip(-1), x, x[..., :, w - pad:].flip(-1)], dim=-1)
    return torch.cat([x[..., :pad, :].flip(-2), x, x[..., h - pad:, :].flip(-2)], dim=-2)
