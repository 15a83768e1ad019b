import pytest

from aibnet.config import Config, set_key
from aibnet.data import KernelRanges, load_pairs, make_dataset, make_synthetic_sharp


def toy_config(**overrides) -> Config:
    """Smallest trainable configuration: 4 channels, one block per level."""
    cfg = Config()
    values = dict(base_channels=4, blocks_per_level=1, sub_decoders=1,
                  enc_blocks_per_level=1, n_masks=2,
                  batch=2, patch=16, total_iters=10, ckpt_every=4, log_every=1,
                  grad_clip=1.0, seed=1)
    values.update(overrides)
    for key, value in values.items():
        set_key(cfg, key, value)
    return cfg


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Four 32x32 train pairs plus one test pair, mild blur."""
    root = tmp_path_factory.mktemp("tinydata")
    make_synthetic_sharp(root / "src", 3, size=32, seed=0)
    ranges = KernelRanges(length=(3, 7), kernel_size=9, curvature=(-1.0, 1.0),
                          noise_sigma=(0.0, 0.005))
    make_dataset(root / "src", root / "ds", count=4, ranges=ranges, seed=0)
    return root / "ds"


@pytest.fixture(scope="session")
def tiny_pairs(tiny_dataset):
    return load_pairs(tiny_dataset, "train"), load_pairs(tiny_dataset, "test")
