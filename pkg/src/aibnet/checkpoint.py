"""Binary checkpoint container.

Layout (all integers little-endian):

    bytes 0..7   magic  b"AIBCKPT1"
    bytes 8..11  uint32 header length in bytes
    header       UTF-8 JSON: format_version, config (flat key/value dict),
                 stage, iteration, optim_steps {tensor name -> int}, and a
                 tensors list of {name, shape, dtype} in storage order
    payload      raw tensor data, concatenated in header order, each tensor
                 little-endian float32, C-contiguous

Round trips are bit-exact: loading returns tensors whose bytes equal the
ones saved.
"""

import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"AIBCKPT1"
FORMAT_VERSION = 1


def save_checkpoint(path, config: dict, stage: int, iteration: int,
                    tensors: dict, optim_steps: dict | None = None) -> None:
    entries = []
    blobs = []
    for name, tensor in tensors.items():
        if tensor.dtype != torch.float32:
            raise ValueError(f"checkpoint tensors must be float32, got {tensor.dtype} for {name}")
        arr = tensor.detach().contiguous().cpu().numpy()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "f4"})
        blobs.append(arr.astype("<f4", copy=False).tobytes())
    header = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "stage": int(stage),
        "iteration": int(iteration),
        "optim_steps": {k: int(v) for k, v in (optim_steps or {}).items()},
        "tensors": entries,
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Returns (header dict, {name: float32 tensor})."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format version {header.get('format_version')}")
        tensors = {}
        for entry in header["tensors"]:
            count = int(np.prod(entry["shape"], dtype=np.int64)) if entry["shape"] else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise ValueError(f"{path}: truncated tensor data for {entry['name']}")
            arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
            tensors[entry["name"]] = torch.from_numpy(arr)
    return header, tensors
