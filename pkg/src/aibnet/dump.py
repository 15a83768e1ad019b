"""Serialize attention internals (differential attention maps, alpha, mask
supports) to CSV files for inspection.

Files written to the output directory:
    att1.csv, att2.csv   C x C row-softmax attention matrices, one row per line
    alpha.csv            header 'alpha,temperature' plus one value row
    mask_<i>.csv         0/1 support of the i-th sparse attention mask
    lambdas.csv          header 'lambda_1..n' plus the fusion weights
"""

from pathlib import Path

import numpy as np
import torch

from .config import ConfigError


def _write_matrix(path, matrix, fmt="%.8e"):
    np.savetxt(path, np.asarray(matrix), fmt=fmt, delimiter=",")


def dump_attention(model, image: torch.Tensor, sub_decoder: int = 1, scale: int = 1,
                   block: int = 1, out_dir="attn_dump") -> Path:
    """Run one forward pass and write the selected block's internals.

    sub_decoder, scale and block are 1-based; scale 1 is the finest level.
    Uses batch element 0 when the input is batched.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not 1 <= sub_decoder <= len(model.sub_decoders):
        raise ConfigError(f"sub_decoder must lie in [1, {len(model.sub_decoders)}]")
    sd = model.sub_decoders[sub_decoder - 1]
    if not 1 <= scale <= sd.scales:
        raise ConfigError(f"scale must lie in [1, {sd.scales}]")
    stage = sd.stages[scale - 1]
    if not 1 <= block <= len(stage):
        raise ConfigError(f"block must lie in [1, {len(stage)}]")
    sfem = stage[block - 1].sfem
    hfs = sd.hfs[scale - 1]
    if sfem is None and hfs is None:
        raise ConfigError("selected block has neither SFEM nor HFSBlock enabled")

    records = {}
    if sfem is not None:
        sfem.record = records.setdefault("sfem", {})
    if hfs is not None:
        hfs.record = records.setdefault("hfs", {})
    try:
        with torch.no_grad():
            model(image)
    finally:
        if sfem is not None:
            sfem.record = None
        if hfs is not None:
            hfs.record = None

    if "sfem" in records and records["sfem"]:
        rec = records["sfem"]
        _write_matrix(out_dir / "att1.csv", rec["att1"][0].numpy())
        _write_matrix(out_dir / "att2.csv", rec["att2"][0].numpy())
        with open(out_dir / "alpha.csv", "w", encoding="utf-8") as fh:
            fh.write("alpha,temperature\n")
            fh.write(f"{rec['alpha']!r},{rec['temperature']!r}\n")
    if "hfs" in records and records["hfs"]:
        rec = records["hfs"]
        for i, support in enumerate(rec.get("supports", []), start=1):
            _write_matrix(out_dir / f"mask_{i}.csv", support[0].numpy().astype(int), fmt="%d")
        lambdas = rec["lambdas"].numpy()
        with open(out_dir / "lambdas.csv", "w", encoding="utf-8") as fh:
            fh.write(",".join(f"lambda_{i + 1}" for i in range(len(lambdas))) + "\n")
            fh.write(",".join(repr(float(v)) for v in lambdas) + "\n")
    return out_dir
