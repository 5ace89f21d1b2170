"""Model checkpoint serialization.

Layout (all integers little-endian):

    bytes 0..7    magic ``MEDSRNET``
    bytes 8..11   uint32 format version (currently 1)
    bytes 12..15  uint32 header length in bytes
    header        UTF-8 JSON: {"config": {...}, "arrays": [{"name", "shape"}...]}
    payload       the arrays, concatenated in header order, each a
                  contiguous little-endian float32 buffer

Array names are ``conv01.weights``, ``conv01.bias``, ... in layer order.
Weights are stored as float32 regardless of the in-memory dtype.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .model import AxisMode, ConvLayer, SRNet, SRNetConfig

MAGIC = b"MEDSRNET"
FORMAT_VERSION = 1


def _config_to_dict(cfg: SRNetConfig) -> dict:
    return {
        "scale_factor": cfg.scale_factor,
        "axis_mode": cfg.axis_mode.value,
        "base_filters": cfg.base_filters,
        "enable_second_block": cfg.enable_second_block,
        "enable_intermediate_loss": cfg.enable_intermediate_loss,
        "enable_short_skips": cfg.enable_short_skips,
        "enable_long_skip": cfg.enable_long_skip,
        "lambda_": cfg.lambda_,
        "relu_on_outputs": cfg.relu_on_outputs,
        "shuffle_axis": cfg.shuffle_axis,
    }


def _config_from_dict(d: dict) -> SRNetConfig:
    d = dict(d)
    d["axis_mode"] = AxisMode(d["axis_mode"])
    return SRNetConfig(**d)


def save_checkpoint(net: SRNet, path: str | Path) -> None:
    """Write the network to ``path`` in the documented binary format."""
    arrays: list[tuple[str, np.ndarray]] = []
    for i, layer in enumerate(net.layers, start=1):
        arrays.append((f"conv{i:02d}.weights", layer.weights))
        arrays.append((f"conv{i:02d}.bias", layer.bias))
    header = {
        "config": _config_to_dict(net.config),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> SRNet:
    """Read a checkpoint back into an SRNet (float32 parameters)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a medsr checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16 : 16 + hlen].decode("utf-8"))
    cfg = _config_from_dict(header["config"])
    offset = 16 + hlen
    arrays: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(data, dtype="<f4", count=count, offset=offset).reshape(shape)
        arrays[spec["name"]] = a.astype(np.float32)  # copy: frombuffer is read-only
        offset += count * 4
    n_layers = 10 if cfg.enable_second_block else 6
    layers = [
        ConvLayer(arrays[f"conv{i:02d}.weights"], arrays[f"conv{i:02d}.bias"])
        for i in range(1, n_layers + 1)
    ]
    return SRNet(layers=layers, config=cfg)
