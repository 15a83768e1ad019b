"""Synthetic-blur dataset generation, paired-folder loading (GoPro layout),
patch sampling, and flip augmentation.

Images travel through this module as float32 (H, W, 3) arrays in [0, 1];
8-bit PNG is the interchange format on disk.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
MANIFEST_HEADER = "id\tlength\tangle\tcurvature\tnoise\tsplit"


@dataclass
class BlurKernel:
    array: np.ndarray  # (k, k) float64, nonnegative, sums to 1
    length: int
    angle: float
    curvature: float
    seed: int


@dataclass
class PairedSample:
    blurred: np.ndarray
    sharp: np.ndarray
    id: str


@dataclass
class KernelRanges:
    length: tuple = (5, 21)
    kernel_size: int = 31
    curvature: tuple = (-2.0, 2.0)
    noise_sigma: tuple = (0.0, 0.01)


def gen_motion_kernel(length: int, angle: float, curvature: float = 0.0,
                      size: int = 31, seed: int = 0) -> BlurKernel:
    """Rasterize a (possibly curved) sub-pixel motion trajectory.

    The path has `length` unit-spaced samples centered on the grid; each is
    splatted bilinearly onto the size x size grid and the result normalized
    to sum 1. length=1 collapses to a delta kernel.
    """
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel size must be odd, got {size}")
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    if length > size:
        raise ValueError(f"length {length} exceeds kernel size {size}")
    grid = np.zeros((size, size), dtype=np.float64)
    center = (size - 1) / 2
    t = np.arange(length, dtype=np.float64) - (length - 1) / 2
    if length > 1:
        u = t / ((length - 1) / 2)
        perp = curvature * (u * u - np.mean(u * u))
    else:
        perp = np.zeros(1)
    hi = max(0.0, size - 1 - 1e-9)
    xs = np.clip(center + t * math.cos(angle) - perp * math.sin(angle), 0.0, hi)
    ys = np.clip(center + t * math.sin(angle) + perp * math.cos(angle), 0.0, hi)
    for x, y in zip(xs, ys):
        x0, y0 = int(x), int(y)
        fx, fy = x - x0, y - y0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                if y0 + dy < size and x0 + dx < size:
                    grid[y0 + dy, x0 + dx] += wy * wx
    grid /= grid.sum()
    return BlurKernel(grid, length, angle, curvature, seed)


def apply_blur(sharp: np.ndarray, kernel: BlurKernel, noise_sigma: float = 0.0,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """Per-channel true convolution with edge-mirrored padding, plus optional
    i.i.d. Gaussian noise, clamped back to [0, 1]."""
    out = np.empty_like(sharp, dtype=np.float64)
    for c in range(sharp.shape[2]):
        out[:, :, c] = ndimage.convolve(sharp[:, :, c].astype(np.float64),
                                        kernel.array, mode="reflect")
    if noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng(kernel.seed)
        out += rng.normal(0.0, noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def load_png(path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def save_png(path, image: np.ndarray) -> None:
    arr = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def make_synthetic_sharp(out_dir, count: int, size: int = 64, seed: int = 0) -> list:
    """Render structured sharp images (gradient background plus random
    rectangles, disks and lines) so blur is visible and learnable."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / max(size - 1, 1)
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 9177, i]))
        img = np.empty((size, size, 3), dtype=np.float64)
        for c in range(3):
            gx, gy, bias = rng.uniform(-0.5, 0.5, 2).tolist() + [rng.uniform(0.2, 0.8)]
            img[:, :, c] = bias + gx * xx + gy * yy
        for _ in range(rng.integers(6, 12)):
            color = rng.uniform(0.0, 1.0, 3)
            kind = rng.integers(0, 3)
            if kind == 0:  # rectangle
                y0, x0 = rng.integers(0, size, 2)
                h, w = rng.integers(size // 8, size // 2, 2)
                img[y0:y0 + h, x0:x0 + w] = color
            elif kind == 1:  # disk
                cy, cx = rng.uniform(0, size, 2)
                r = rng.uniform(size / 16, size / 5)
                mask = (yy * (size - 1) - cy) ** 2 + (xx * (size - 1) - cx) ** 2 <= r * r
                img[mask] = color
            else:  # line
                ang = rng.uniform(0, np.pi)
                off = rng.uniform(0, size)
                d = np.abs((xx * (size - 1) - off) * math.sin(ang)
                           - (yy * (size - 1) - off * 0.5) * math.cos(ang))
                img[d < rng.uniform(1.0, 3.0)] = color
        path = out_dir / f"sharp_{i:05d}.png"
        save_png(path, np.clip(img, 0.0, 1.0))
        paths.append(path)
    return paths


def _split_ids(ids: list, n_train: int) -> dict:
    """Hash-ordered 80/20 split: the n_train ids with the smallest digest go
    to 'train', the rest to 'test'."""
    digest = {i: hashlib.sha1(i.encode()).hexdigest() for i in ids}
    ordered = sorted(ids, key=lambda i: digest[i])
    return {i: ("train" if rank < n_train else "test") for rank, i in enumerate(ordered)}


def make_dataset(sharp_dir, out_dir, count: int, ranges: KernelRanges | None = None,
                 seed: int = 0) -> Path:
    """Write `count` train pairs (plus ~25% as many test pairs) in GoPro
    layout under out_dir, with a tab-separated manifest. Deterministic for a
    fixed seed."""
    ranges = ranges or KernelRanges()
    sharp_dir, out_dir = Path(sharp_dir), Path(out_dir)
    sources = sorted(sharp_dir.glob("*.png"))
    if not sources:
        raise FileNotFoundError(f"no PNG images in {sharp_dir}")
    images = []
    for p in sources:
        try:
            images.append(load_png(p))
        except Exception as exc:  # unreadable file: skip, keep going
            log.warning("skipping unreadable image %s (%s)", p, exc)
    if not images:
        raise FileNotFoundError(f"no readable PNG images in {sharp_dir}")

    n_test = max(1, round(count * 0.25))
    ids = [f"{i:05d}" for i in range(count + n_test)]
    split = _split_ids(ids, count)

    for sub in ("train", "test"):
        (out_dir / sub / "blur").mkdir(parents=True, exist_ok=True)
        (out_dir / sub / "sharp").mkdir(parents=True, exist_ok=True)

    lines = [MANIFEST_HEADER]
    for idx, pair_id in enumerate(ids):
        rng = np.random.default_rng(np.random.SeedSequence([seed, idx]))
        sharp = images[int(rng.integers(0, len(images)))]
        length = int(rng.integers(ranges.length[0], ranges.length[1] + 1))
        angle = float(rng.uniform(0.0, 2.0 * np.pi))
        curvature = float(rng.uniform(*ranges.curvature))
        noise = float(rng.uniform(*ranges.noise_sigma))
        kernel = gen_motion_kernel(length, angle, curvature, ranges.kernel_size, seed=idx)
        blurred = apply_blur(sharp, kernel, noise, rng)
        sub = split[pair_id]
        save_png(out_dir / sub / "sharp" / f"{pair_id}.png", sharp)
        save_png(out_dir / sub / "blur" / f"{pair_id}.png", blurred)
        lines.append(f"{pair_id}\t{length}\t{angle:.8f}\t{curvature:.8f}\t{noise:.8f}\t{sub}")

    manifest = out_dir / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def load_pairs(root, split: str) -> list:
    """Read a {split}/{blur|sharp}/<id>.png folder (GoPro layout)."""
    root = Path(root)
    blur_dir = root / split / "blur"
    sharp_dir = root / split / "sharp"
    if not blur_dir.is_dir() or not sharp_dir.is_dir():
        raise FileNotFoundError(f"missing {blur_dir} or {sharp_dir}")
    pairs = []
    for blur_path in sorted(blur_dir.glob("*.png")):
        sharp_path = sharp_dir / blur_path.name
        if not sharp_path.exists():
            log.warning("no sharp counterpart for %s; skipping", blur_path)
            continue
        pairs.append(PairedSample(load_png(blur_path), load_png(sharp_path), blur_path.stem))
    if not pairs:
        raise FileNotFoundError(f"no paired images under {root}/{split}")
    return pairs


def crop_pair(pair: PairedSample, top: int, left: int, patch: int) -> PairedSample:
    return PairedSample(
        pair.blurred[top:top + patch, left:left + patch],
        pair.sharp[top:top + patch, left:left + patch],
        pair.id,
    )


def flip_pair(pair: PairedSample, horizontal: bool, vertical: bool) -> PairedSample:
    blur, sharp = pair.blurred, pair.sharp
    if horizontal:
        blur, sharp = blur[:, ::-1], sharp[:, ::-1]
    if vertical:
        blur, sharp = blur[::-1, :], sharp[::-1, :]
    return PairedSample(np.ascontiguousarray(blur), np.ascontiguousarray(sharp), pair.id)


def sample_patches(pair: PairedSample, patch: int, n: int, seed: int = 0) -> list:
    """n aligned random crops; blur and sharp share the same window."""
    h, w = pair.sharp.shape[:2]
    if patch > min(h, w):
        raise ValueError(f"patch {patch} larger than image {h}x{w}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5531]))
    out = []
    for _ in range(n):
        top = int(rng.integers(0, h - patch + 1))
        left = int(rng.integers(0, w - patch + 1))
        out.append(crop_pair(pair, top, left, patch))
    return out


def augment(pair: PairedSample, seed: int = 0) -> PairedSample:
    """Random horizontal/vertical flips, identical for both images."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7789]))
    return flip_pair(pair, rng.random() < 0.5, rng.random() < 0.5)
