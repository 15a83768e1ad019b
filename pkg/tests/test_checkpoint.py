import struct

import pytest
import torch

from aibnet.checkpoint import MAGIC, load_checkpoint, save_checkpoint


def _tensors():
    g = torch.Generator().manual_seed(7)
    return {
        "a.weight": torch.rand(3, 4, generator=g),
        "b.bias": torch.rand(5, generator=g),
        "scalar": torch.rand((), generator=g),
        "optim.a.weight.m": torch.rand(3, 4, generator=g),
    }


def test_roundtrip_is_bit_exact(tmp_path):
    path = tmp_path / "x.ckpt"
    tensors = _tensors()
    save_checkpoint(path, {"base_channels": 4}, stage=1, iteration=42, tensors=tensors,
                    optim_steps={"a.weight": 42})
    header, loaded = load_checkpoint(path)
    assert header["stage"] == 1
    assert header["iteration"] == 42
    assert header["config"] == {"base_channels": 4}
    assert header["optim_steps"] == {"a.weight": 42}
    assert set(loaded) == set(tensors)
    for name, tensor in tensors.items():
        assert loaded[name].dtype == torch.float32
        assert loaded[name].numpy().tobytes() == tensor.numpy().tobytes()


def test_double_roundtrip_identical_bytes(tmp_path):
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    tensors = _tensors()
    save_checkpoint(a, {}, 0, 0, tensors)
    _, loaded = load_checkpoint(a)
    save_checkpoint(b, {}, 0, 0, loaded)
    assert a.read_bytes() == b.read_bytes()


def test_rejects_non_float32(tmp_path):
    with pytest.raises(ValueError):
        save_checkpoint(tmp_path / "x.ckpt", {}, 0, 0, {"a": torch.zeros(2, dtype=torch.float64)})


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)


def test_rejects_truncated_payload(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, {}, 0, 0, _tensors())
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)


def test_header_is_little_endian_length(tmp_path):
    path = tmp_path / "h.ckpt"
    save_checkpoint(path, {}, 2, 7, {})
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    (hlen,) = struct.unpack("<I", raw[8:12])
    assert len(raw) == 12 + hlen
