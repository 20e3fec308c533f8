"""Progressive-granularity patch sampling.

The sampling granularity at a grid location grows with its Chebyshev distance
from the anchor: g(x, y) = 2^min(a0 + floor(d/lambda), a1).  Each power-of-two
level tiles the grid with g x g windows (partial at the bottom/right edges);
a window is kept when the granularity at its own center equals that level's g.
Kept windows, in canonical order (ascending level, then row-major tile index),
define where patch descriptors are sampled.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math

import numpy as np

from .errors import InvalidArgumentError
from .fmap import FeatureMap, GridPoint, avg_pool


@dataclasses.dataclass(frozen=True)
class Window:
    """One pooled sampling window on the raw feature grid."""

    level: int                            # exponent p, g = 2**p
    g: int
    index: tuple[int, int]                # tile index (i, j): row, col
    center: GridPoint                     # centroid of the valid raw cells
    extent: tuple[int, int, int, int]     # (y0, x0, y1, x1), half-open in raw cells


@dataclasses.dataclass(frozen=True)
class SamplingGeometry:
    height: int
    width: int
    anchor: GridPoint
    lam: float
    a0: int
    a1: int
    windows: tuple[Window, ...]

    @property
    def n_windows(self) -> int:
        return len(self.windows)

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "anchor": [self.anchor.x, self.anchor.y],
            "lambda": self.lam,
            "a0": self.a0,
            "a1": self.a1,
            "windows": [
                [w.level, w.index[0], w.index[1], w.center.x, w.center.y, *w.extent]
                for w in self.windows
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "SamplingGeometry":
        windows = tuple(
            Window(
                level=int(p),
                g=2 ** int(p),
                index=(int(i), int(j)),
                center=GridPoint(float(cx), float(cy)),
                extent=(int(y0), int(x0), int(y1), int(x1)),
            )
            for p, i, j, cx, cy, y0, x0, y1, x1 in doc["windows"]
        )
        return cls(
            height=int(doc["height"]),
            width=int(doc["width"]),
            anchor=GridPoint(float(doc["anchor"][0]), float(doc["anchor"][1])),
            lam=float(doc["lambda"]),
            a0=int(doc["a0"]),
            a1=int(doc["a1"]),
            windows=windows,
        )

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclasses.dataclass(frozen=True)
class DescriptorSet:
    """Sampled per-window feature vectors, (N, C) float32, tied to a geometry."""

    descriptors: np.ndarray
    geometry_digest: str

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.descriptors, dtype=np.float32))
        arr.flags.writeable = False
        object.__setattr__(self, "descriptors", arr)


def chebyshev(p: GridPoint, q: GridPoint) -> float:
    return max(abs(p.x - q.x), abs(p.y - q.y))


def granularity_at(lam: float, a0: int, a1: int, anchor: GridPoint, loc: GridPoint) -> int:
    """Granularity factor at ``loc``: 2^min(a0 + floor(d_anc/lambda), a1)."""
    if lam <= 0:
        raise InvalidArgumentError(f"lambda must be positive, got {lam}")
    if a0 > a1:
        raise InvalidArgumentError(f"granularity exponents need a0 <= a1, got {a0} > {a1}")
    step = math.floor(chebyshev(loc, anchor) / lam)
    return 2 ** min(a0 + step, a1)


def build_geometry(lam: float, a0: int, a1: int, anchor: GridPoint,
                   height: int, width: int) -> SamplingGeometry:
    """Enumerate the kept sampling windows for one checkpoint's grid.

    Pure function of its arguments; repeated calls produce identical output.
    """
    if lam <= 0:
        raise InvalidArgumentError(f"lambda must be positive, got {lam}")
    if a0 > a1 or a0 < 0:
        raise InvalidArgumentError(f"bad granularity exponents a0={a0}, a1={a1}")
    if not (0 <= anchor.x <= width - 1 and 0 <= anchor.y <= height - 1):
        raise InvalidArgumentError(
            f"anchor ({anchor.x}, {anchor.y}) outside grid {height}x{width}"
        )
    anchor = GridPoint(float(anchor.x), float(anchor.y))
    height, width = int(height), int(width)
    windows = []
    for p in range(a0, a1 + 1):
        g = 2 ** p
        if g > max(height, width):
            break
        for i in range((height + g - 1) // g):
            y0, y1 = i * g, min(i * g + g, height)
            cy = (y0 + y1 - 1) / 2
            for j in range((width + g - 1) // g):
                x0, x1 = j * g, min(j * g + g, width)
                cx = (x0 + x1 - 1) / 2
                center = GridPoint(cx, cy)
                if granularity_at(lam, a0, a1, anchor, center) == g:
                    windows.append(Window(p, g, (i, j), center, (y0, x0, y1, x1)))
    return SamplingGeometry(height, width, anchor, float(lam), a0, a1, tuple(windows))


def sample_descriptors(fmap: FeatureMap, geometry: SamplingGeometry) -> DescriptorSet:
    """Sample one descriptor per geometry window (mean over its raw extent).

    Pools the map once per level and gathers the kept windows, which equals
    direct per-window averaging of the raw cells.
    """
    if (fmap.height, fmap.width) != (geometry.height, geometry.width):
        raise InvalidArgumentError(
            f"map grid {fmap.height}x{fmap.width} does not match geometry "
            f"{geometry.height}x{geometry.width}"
        )
    rows = np.empty((geometry.n_windows, fmap.channels), dtype=np.float32)
    pos = 0
    for level in sorted({w.level for w in geometry.windows}):
        g = 2 ** level
        pooled = avg_pool(fmap, g).data
        wp = pooled.shape[1]
        flat = pooled.reshape(-1, fmap.channels)
        idx = [w.index[0] * wp + w.index[1] for w in geometry.windows if w.level == level]
        rows[pos : pos + len(idx)] = flat[idx]
        pos += len(idx)
    return DescriptorSet(rows, geometry.digest())


def coverage_stats(geometry: SamplingGeometry) -> dict:
    """How often each raw cell is covered by kept windows (debug aid).

    The center keep-rule does not force a partition: cells near a ring
    boundary can be covered zero or several times.
    """
    counts = np.zeros((geometry.height, geometry.width), dtype=np.int64)
    for w in geometry.windows:
        y0, x0, y1, x1 = w.extent
        counts[y0:y1, x0:x1] += 1
    hist = np.bincount(counts.reshape(-1))
    return {
        "n_windows": geometry.n_windows,
        "cells": int(counts.size),
        "uncovered": int((counts == 0).sum()),
        "multi_covered": int((counts > 1).sum()),
        "coverage_histogram": {str(k): int(v) for k, v in enumerate(hist) if v},
    }
