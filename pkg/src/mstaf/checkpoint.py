"""Self-describing single-file checkpoint format.

Layout: 8-byte magic, u32 format version, u64 header length, JSON header
(config, tensor names/shapes/dtypes/offsets), then the raw little-endian
tensor payloads in header order. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, ModelParams, init_params

MAGIC = b"MSTAFCKP"
FORMAT_VERSION = 1

_DTYPE_CODES = {"float32": "<f4", "float64": "<f8"}


def save_checkpoint(params: ModelParams, cfg: ModelConfig, path) -> None:
    path = Path(path)
    named = params.named()
    code = _DTYPE_CODES[cfg.dtype]
    entries = []
    offset = 0
    buffers = []
    for name, tensor in named.items():
        data = np.ascontiguousarray(tensor.data.astype(code, copy=False))
        buffers.append(data.tobytes())
        entries.append({"name": name, "shape": list(tensor.shape), "dtype": code, "offset": offset})
        offset += len(buffers[-1])
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "config": cfg.to_dict(), "tensors": entries},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for buf in buffers:
            fh.write(buf)


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig]:
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 8)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version} != supported {FORMAT_VERSION}")
    (header_len,) = struct.unpack_from("<Q", blob, 12)
    header_end = 20 + header_len
    if len(blob) < header_end:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[20:header_end])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc

    cfg = ModelConfig.from_dict(header["config"])
    params = init_params(cfg, seed=0)
    named = params.named()

    file_names = [e["name"] for e in header["tensors"]]
    missing = set(named) - set(file_names)
    extra = set(file_names) - set(named)
    if missing or extra:
        offender = sorted(missing or extra)[0]
        raise CheckpointError(f"{path}: tensor set mismatch (first offender: '{offender}')")

    payload = blob[header_end:]
    for entry in header["tensors"]:
        name = entry["name"]
        tensor = named[name]
        shape = tuple(entry["shape"])
        if shape != tensor.shape:
            raise CheckpointError(f"{path}: tensor '{name}' has shape {shape}, expected {tensor.shape}")
        dtype = np.dtype(entry["dtype"])
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize if shape else dtype.itemsize
        start = entry["offset"]
        chunk = payload[start : start + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated payload at tensor '{name}'")
        tensor.data = np.frombuffer(chunk, dtype=dtype).reshape(shape).astype(cfg.np_dtype).copy()
    return params, cfg
