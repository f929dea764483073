"""Parameter snapshots: a JSON shape header followed by flat little-endian float64 data."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

SNAPSHOT_VERSION = 1


class SnapshotFormatError(ValueError):
    pass


def write_snapshot(path, arrays: dict[str, np.ndarray]) -> None:
    """Serialize named arrays: 4-byte LE header length, JSON header, raw <f8 data."""
    header = {
        "version": SNAPSHOT_VERSION,
        "dtype": "<f8",
        "fields": [[name, list(np.asarray(a).shape)] for name, a in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    flat = np.concatenate([np.asarray(a, dtype="<f8").ravel() for a in arrays.values()]) \
        if arrays else np.zeros(0, dtype="<f8")
    with Path(path).open("wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(flat.astype("<f8").tobytes())


def read_snapshot(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise SnapshotFormatError(f"{path}: truncated header length")
    (header_len,) = struct.unpack("<I", raw[:4])
    if len(raw) < 4 + header_len:
        raise SnapshotFormatError(f"{path}: truncated header")
    header = json.loads(raw[4:4 + header_len].decode())
    if header.get("version") != SNAPSHOT_VERSION:
        raise SnapshotFormatError(f"{path}: unsupported version {header.get('version')}")
    data = np.frombuffer(raw, dtype="<f8", offset=4 + header_len)
    arrays: dict[str, np.ndarray] = {}
    cursor = 0
    for name, shape in header["fields"]:
        size = int(np.prod(shape)) if shape else 1
        if cursor + size > data.size:
            raise SnapshotFormatError(f"{path}: data shorter than declared shapes")
        arrays[name] = data[cursor:cursor + size].reshape(shape).copy()
        cursor += size
    if cursor != data.size:
        raise SnapshotFormatError(f"{path}: {data.size - cursor} trailing values")
    return arrays
