"""Feature-map data model, pooling, channel projection, and the FMAP file format.

A :class:`FeatureMap` is an immutable H x W x C float32 tensor laid out
row-major (y, x, c), optionally carrying a provenance record.  The on-disk
format is::

    magic   b"FMAP1\\n"
    header  three little-endian uint32: H, W, C
    payload H*W*C little-endian IEEE-754 float32, row-major (y, x, c)

with an optional sidecar ``<stem>.meta.json`` next to the tensor file holding
the provenance record.
"""

from __future__ import annotations

import dataclasses
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidArgumentError, IoError

MAGIC = b"FMAP1\n"
_HEADER = struct.Struct("<III")


@dataclasses.dataclass(frozen=True)
class GridPoint:
    """A (possibly fractional) location on a feature grid, x = column, y = row."""

    x: float
    y: float

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclasses.dataclass(frozen=True)
class FeatureMap:
    """Immutable patch-feature tensor with optional provenance metadata."""

    data: np.ndarray
    meta: dict | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise InvalidArgumentError(f"feature map must be 3-d (H, W, C), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise InvalidArgumentError(f"feature map dims must be positive, got {arr.shape}")
        if arr.dtype != np.float32:
            arr = arr.astype(np.float32)
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("feature map contains non-finite values")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def avg_pool(fmap: FeatureMap, g: int) -> FeatureMap:
    """Average-pool with kernel size and stride ``g`` (ceil mode).

    Output cell (i, j) is the mean of raw cells [i*g, min(i*g+g, H)) x
    [j*g, min(j*g+g, W)); partial edge windows average only their valid cells.
    Accumulation runs in float64, the result is stored back as float32.
    """
    if not isinstance(g, (int, np.integer)) or g <= 0:
        raise InvalidArgumentError(f"pool granularity must be a positive integer, got {g!r}")
    h, w = fmap.height, fmap.width
    if g > max(h, w):
        raise InvalidArgumentError(f"pool granularity {g} exceeds grid extent {max(h, w)}")
    arr = fmap.data.astype(np.float64)
    row_idx = np.arange(0, h, g)
    col_idx = np.arange(0, w, g)
    sums = np.add.reduceat(np.add.reduceat(arr, row_idx, axis=0), col_idx, axis=1)
    row_counts = np.diff(np.append(row_idx, h))
    col_counts = np.diff(np.append(col_idx, w))
    counts = np.multiply.outer(row_counts, col_counts)[:, :, None]
    return FeatureMap((sums / counts).astype(np.float32), meta=fmap.meta)


def select_channels(fmap: FeatureMap, mask) -> FeatureMap:
    """Project a map onto the kept channels of ``mask`` (order preserved).

    ``mask`` may be a :class:`vadkit.channels.ChannelMask` or any sequence of
    channel indices.
    """
    kept = getattr(mask, "kept", mask)
    idx = np.asarray(list(kept), dtype=np.int64)
    if idx.size == 0:
        raise InvalidArgumentError("channel selection kept no channels")
    if idx.min() < 0 or idx.max() >= fmap.channels:
        raise InvalidArgumentError(
            f"channel index out of range: kept indices must lie in [0, {fmap.channels})"
        )
    return FeatureMap(fmap.data[:, :, idx], meta=fmap.meta)


def _meta_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".meta.json")


def atomic_write_bytes(path, payload: bytes):
    """Write ``payload`` to ``path`` via a same-directory temp file + rename."""
    p = Path(path)
    if not p.parent.is_dir():
        raise IoError(f"parent directory does not exist: {p.parent}")
    fd, tmp = tempfile.mkstemp(dir=p.parent, prefix=p.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_fmap(fmap: FeatureMap, path):
    """Write a FeatureMap losslessly; emits the meta sidecar when present."""
    payload = MAGIC + _HEADER.pack(fmap.height, fmap.width, fmap.channels)
    payload += fmap.data.astype("<f4").tobytes()
    atomic_write_bytes(path, payload)
    if fmap.meta is not None:
        meta = json.dumps(fmap.meta, sort_keys=True, indent=2) + "\n"
        atomic_write_bytes(_meta_path(path), meta.encode())


def read_fmap(path) -> FeatureMap:
    """Read an FMAP file, validating magic, dims, payload length, and finiteness."""
    p = Path(path)
    if not p.is_file():
        raise IoError(f"no such feature-map file: {p}")
    blob = p.read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{p}: bad magic at byte offset 0")
    off = len(MAGIC)
    if len(blob) < off + _HEADER.size:
        raise FormatError(f"{p}: truncated header at byte offset {len(blob)}")
    h, w, c = _HEADER.unpack_from(blob, off)
    off += _HEADER.size
    if min(h, w, c) < 1:
        raise FormatError(f"{p}: non-positive dims {h}x{w}x{c} at byte offset {len(MAGIC)}")
    expected = h * w * c * 4
    if len(blob) - off != expected:
        raise FormatError(
            f"{p}: payload is {len(blob) - off} bytes, dims {h}x{w}x{c} require {expected}"
            f" (mismatch at byte offset {off})"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=off).reshape(h, w, c)
    if not np.all(np.isfinite(data)):
        bad = int(np.flatnonzero(~np.isfinite(data.reshape(-1)))[0])
        raise FormatError(f"{p}: non-finite value at byte offset {off + 4 * bad}")
    meta = None
    mp = _meta_path(p)
    if mp.is_file():
        meta = json.loads(mp.read_text())
    return FeatureMap(np.ascontiguousarray(data), meta=meta)
