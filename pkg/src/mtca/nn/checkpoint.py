"""Checkpoint files: a JSON header followed by a float64 parameter blob.

Layout::

    b"MTCACKPT"            8-byte magic
    uint32 LE              header length in bytes
    header                 UTF-8 JSON: format_version, parameter names/shapes,
                           CRC-32 of the blob, plus caller metadata
    blob                   little-endian float64 values, parameters concatenated
                           in header order, each in row-major order
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .tensor import Tensor

MAGIC = b"MTCACKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(params: list[Tensor], metadata: dict | None = None) -> bytes:
    blob = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in params)
    header = {
        "format_version": FORMAT_VERSION,
        "parameters": [{"name": p.name, "shape": list(p.shape)} for p in params],
        "crc32": zlib.crc32(blob),
        "metadata": metadata or {},
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return MAGIC + struct.pack("<I", len(head)) + head + blob


def decode_checkpoint(raw: bytes) -> tuple[list[tuple[str, np.ndarray]], dict]:
    if raw[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {header.get('format_version')}")
    blob = raw[12 + hlen:]
    if zlib.crc32(blob) != header["crc32"]:
        raise CheckpointError("checkpoint checksum mismatch")
    values = np.frombuffer(blob, dtype="<f8")
    out, offset = [], 0
    for entry in header["parameters"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        out.append((entry["name"], values[offset:offset + n].reshape(entry["shape"]).astype(np.float64)))
        offset += n
    if offset != values.size:
        raise CheckpointError("checkpoint blob length does not match header")
    return out, header["metadata"]


def save_checkpoint(path, params: list[Tensor], metadata: dict | None = None) -> None:
    Path(path).write_bytes(encode_checkpoint(params, metadata))


def load_checkpoint(path) -> tuple[list[tuple[str, np.ndarray]], dict]:
    return decode_checkpoint(Path(path).read_bytes())


def restore_parameters(params: list[Tensor], stored: list[tuple[str, np.ndarray]]) -> None:
    """Copy stored values into ``params`` (same canonical order and shapes)."""
    if len(params) != len(stored):
        raise CheckpointError(f"checkpoint has {len(stored)} parameters, model has {len(params)}")
    for p, (name, value) in zip(params, stored):
        if p.shape != value.shape or (p.name and name and p.name != name):
            raise CheckpointError(f"parameter mismatch: {p.name}{p.shape} vs {name}{value.shape}")
        p.data[...] = value
