import math

import numpy as np
import pytest
import torch
from skimage.metrics import structural_similarity

from aibnet.metrics import PSNR_CAP_DB, psnr, ssim


def rand(shape, seed):
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.uniform(0, 1, size=shape))


def skimage_ssim(a: torch.Tensor, b: torch.Tensor) -> float:
    # reference implementation with the universal constants
    a = a.numpy()
    b = b.numpy()
    kwargs = dict(win_size=11, gaussian_weights=True, sigma=1.5,
                  use_sample_covariance=False, data_range=1.0)
    if a.ndim == 2:
        return structural_similarity(a, b, **kwargs)
    return structural_similarity(a, b, channel_axis=0, **kwargs)


def test_psnr_identical_images_capped():
    x = rand((3, 16, 16), seed=0)
    assert psnr(x, x) == PSNR_CAP_DB


def test_psnr_constant_error_closed_form():
    x = rand((3, 16, 16), seed=1) * 0.5 + 0.25
    y = x + 10.0 / 255.0
    expected = 20.0 * math.log10(255.0 / 10.0)
    assert psnr(y, x) == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(28.13, abs=0.01)


def test_psnr_shape_mismatch():
    with pytest.raises(ValueError):
        psnr(torch.zeros(3, 8, 8), torch.zeros(3, 8, 9))


def test_psnr_decreases_with_noise():
    x = rand((3, 32, 32), seed=2)
    rng = np.random.default_rng(3)
    noise = torch.from_numpy(rng.standard_normal((3, 32, 32)))
    values = [psnr((x + amp * noise).clamp(0, 1), x) for amp in (0.01, 0.05, 0.2)]
    assert values[0] > values[1] > values[2]


def test_ssim_identical_images():
    x = rand((3, 16, 16), seed=4)
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_checkerboard_inversion_nonpositive_and_matches_reference():
    yy, xx = np.mgrid[0:16, 0:16]
    board = torch.from_numpy(((yy + xx) % 2).astype(np.float64))
    inverted = 1.0 - board
    mine = ssim(board, inverted)
    reference = skimage_ssim(board, inverted)
    assert mine == pytest.approx(reference, abs=1e-6)
    assert mine <= 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ssim_matches_reference_on_random_images(seed):
    a = rand((3, 20, 24), seed=50 + seed)
    b = (a + 0.15 * rand((3, 20, 24), seed=60 + seed)).clamp(0, 1)
    assert ssim(a, b) == pytest.approx(skimage_ssim(a, b), abs=1e-6)


def test_ssim_accepts_batched_input():
    a = rand((1, 3, 16, 16), seed=7)
    b = rand((1, 3, 16, 16), seed=8)
    assert ssim(a, b) == pytest.approx(ssim(a[0], b[0]), abs=1e-12)


def test_ssim_window_size_guard():
    with pytest.raises(ValueError):
        ssim(torch.zeros(3, 8, 8), torch.zeros(3, 8, 8))
