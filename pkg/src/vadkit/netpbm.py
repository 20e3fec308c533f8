"""Binary netpbm I/O: PGM (P5) for grayscale and masks, PPM (P6) for color.

Only 8-bit images (maxval <= 255) are supported; that is all the pipeline
produces or consumes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError, IoError
from .fmap import atomic_write_bytes


def _read_token(blob: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comments, then read one token
    n = len(blob)
    while pos < n:
        ch = blob[pos : pos + 1]
        if ch == b"#":
            while pos < n and blob[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not blob[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise FormatError(f"truncated netpbm header at byte offset {start}")
    return blob[start:pos], pos


def read_pnm(path) -> np.ndarray:
    """Read a binary PGM/PPM, returning uint8 (H, W) or (H, W, 3)."""
    p = Path(path)
    if not p.is_file():
        raise IoError(f"no such image file: {p}")
    blob = p.read_bytes()
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{p}: unsupported netpbm magic {magic!r} at byte offset 0")
    pos = 2
    vals = []
    for _ in range(3):
        tok, pos = _read_token(blob, pos)
        try:
            vals.append(int(tok))
        except ValueError:
            raise FormatError(f"{p}: bad header token {tok!r} at byte offset {pos}") from None
    width, height, maxval = vals
    if width < 1 or height < 1:
        raise FormatError(f"{p}: non-positive image dims {width}x{height}")
    if not 0 < maxval <= 255:
        raise FormatError(f"{p}: unsupported maxval {maxval} (only 8-bit images)")
    pos += 1  # single whitespace byte after maxval
    channels = 3 if magic == b"P6" else 1
    expected = width * height * channels
    data = blob[pos : pos + expected]
    if len(data) != expected:
        raise FormatError(
            f"{p}: payload is {len(data)} bytes, expected {expected} (at byte offset {pos})"
        )
    arr = np.frombuffer(data, dtype=np.uint8)
    if channels == 3:
        return arr.reshape(height, width, 3).copy()
    return arr.reshape(height, width).copy()


def write_pnm(arr: np.ndarray, path):
    """Write uint8 (H, W) as P5 or (H, W, 3) as P6."""
    a = np.asarray(arr)
    if a.dtype != np.uint8:
        raise FormatError(f"netpbm writer requires uint8 pixels, got {a.dtype}")
    if a.ndim == 2:
        magic = b"P5"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"netpbm writer requires (H, W) or (H, W, 3), got shape {a.shape}")
    header = magic + f"\n{a.shape[1]} {a.shape[0]}\n255\n".encode()
    atomic_write_bytes(path, header + np.ascontiguousarray(a).tobytes())
