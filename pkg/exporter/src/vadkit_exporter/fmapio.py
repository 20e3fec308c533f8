"""FMAP tensor file I/O.

The format is the exchange contract with the detection toolkit:

    magic   b"FMAP1\\n"
    header  three little-endian uint32: H, W, C
    payload H*W*C little-endian float32, row-major (y, x, c)

plus an optional ``<stem>.meta.json`` sidecar.  This module is intentionally
self-contained: the exporter talks to the toolkit only through files.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"FMAP1\n"
_HEADER = struct.Struct("<III")


class FmapFormatError(ValueError):
    pass


def _atomic_write(path, payload: bytes):
    p = Path(path)
    fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=p.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_fmap(array: np.ndarray, path, meta: dict | None = None):
    arr = np.ascontiguousarray(array, dtype=np.float32)
    if arr.ndim != 3:
        raise FmapFormatError(f"tensor must be (H, W, C), got shape {arr.shape}")
    h, w, c = arr.shape
    _atomic_write(path, MAGIC + _HEADER.pack(h, w, c) + arr.astype("<f4").tobytes())
    if meta is not None:
        p = Path(path)
        sidecar = p.with_name(p.stem + ".meta.json")
        _atomic_write(sidecar, (json.dumps(meta, sort_keys=True, indent=2) + "\n").encode())


def read_fmap(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise FmapFormatError(f"{path}: bad magic")
    off = len(MAGIC)
    if len(blob) < off + _HEADER.size:
        raise FmapFormatError(f"{path}: truncated header")
    h, w, c = _HEADER.unpack_from(blob, off)
    off += _HEADER.size
    if len(blob) - off != h * w * c * 4:
        raise FmapFormatError(f"{path}: payload size does not match dims {h}x{w}x{c}")
    return np.frombuffer(blob, dtype="<f4", offset=off).reshape(h, w, c).copy()
