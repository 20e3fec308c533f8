"""Feature extraction backends.

A backend declares its input size, patch/stride geometry, grid dims, and
channel count; featurization must be deterministic (same pixels in,
bit-identical map out).  Two backends ship by default:

* ``filterbank``: a dependency-free 16-channel statistics bank computed on
  each cell's pixel patch; lets the whole pipeline run without any ML stack.
* ``dinov2-vits14``: declared dims for externally exported ViT feature maps
  (35 x 35 x 384); it cannot featurize images here, maps are loaded from
  FMAP files produced by the exporter.
"""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .fmap import FeatureMap

FILTERBANK_CHANNELS = (
    "gray_mean", "gray_std", "dx_mean", "dy_mean", "abs_dx_mean", "abs_dy_mean",
    "r_mean", "g_mean", "b_mean", "r_std", "g_std", "b_std",
    "gray_min", "gray_max", "lap_mean", "gray_range",
)


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize; exact on constant images.

    Output pixel i samples the input at i * (in - 1) / (out - 1); the lerp is
    computed as a + (b - a) * t so constant regions pass through unchanged.
    """
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidArgumentError(f"resize expects a 2-d channel, got shape {a.shape}")
    for axis, out_n in ((0, out_h), (1, out_w)):
        in_n = a.shape[axis]
        if out_n == in_n:
            continue
        if out_n == 1:
            pos = np.zeros(1)
        else:
            pos = np.arange(out_n) * ((in_n - 1) / (out_n - 1))
        lo = np.floor(pos).astype(np.intp)
        np.clip(lo, 0, in_n - 1, out=lo)
        hi = np.minimum(lo + 1, in_n - 1)
        t = pos - lo
        lo_v = np.take(a, lo, axis=axis)
        hi_v = np.take(a, hi, axis=axis)
        shape = [1, 1]
        shape[axis] = out_n
        a = lo_v + (hi_v - lo_v) * t.reshape(shape)
    return a


def _cell_windows(img: np.ndarray, patch: int, stride: int) -> np.ndarray:
    return np.lib.stride_tricks.sliding_window_view(img, (patch, patch))[::stride, ::stride]


def _cell_mean(img, patch, stride):
    return _cell_windows(img, patch, stride).mean(axis=(2, 3))


def _cell_std(img, patch, stride):
    win = _cell_windows(img, patch, stride)
    m = win.mean(axis=(2, 3))
    var = np.maximum((win ** 2).mean(axis=(2, 3)) - m ** 2, 0.0)
    spread = win.max(axis=(2, 3)) - win.min(axis=(2, 3))
    # constant patches have zero variance by definition; mask out float noise
    return np.sqrt(np.where(spread > 0, var, 0.0))


def filterbank_featurize(pixels: np.ndarray, *, input_px: int = 252,
                         patch_px: int = 14, stride_px: int = 7) -> FeatureMap:
    """16 per-patch statistics over overlapping cells of the resized image.

    Grayscale inputs replicate the gray plane into the R/G/B slots.
    """
    px = np.asarray(pixels)
    if px.dtype != np.uint8 or px.ndim not in (2, 3):
        raise InvalidArgumentError("featurize expects uint8 (H, W) or (H, W, 3) pixels")
    if px.ndim == 3 and px.shape[2] != 3:
        raise InvalidArgumentError(f"color images must have 3 channels, got {px.shape[2]}")
    if px.ndim == 2:
        gray = resize_bilinear(px / 255.0, input_px, input_px)
        r = g = b = gray
    else:
        r = resize_bilinear(px[:, :, 0] / 255.0, input_px, input_px)
        g = resize_bilinear(px[:, :, 1] / 255.0, input_px, input_px)
        b = resize_bilinear(px[:, :, 2] / 255.0, input_px, input_px)
        gray = (r + g + b) / 3.0

    dy, dx = np.gradient(gray)
    padded = np.pad(gray, 1, mode="edge")
    lap = (padded[:-2, 1:-1] + padded[2:, 1:-1]
           + padded[1:-1, :-2] + padded[1:-1, 2:] - 4.0 * gray)

    mean = lambda im: _cell_mean(im, patch_px, stride_px)
    std = lambda im: _cell_std(im, patch_px, stride_px)
    gray_win = _cell_windows(gray, patch_px, stride_px)
    gmin = gray_win.min(axis=(2, 3))
    gmax = gray_win.max(axis=(2, 3))

    feats = np.stack(
        [
            mean(gray), std(gray),
            mean(dx), mean(dy), mean(np.abs(dx)), mean(np.abs(dy)),
            mean(r), mean(g), mean(b),
            std(r), std(g), std(b),
            gmin, gmax, mean(lap), gmax - gmin,
        ],
        axis=-1,
    )
    return FeatureMap(feats.astype(np.float32))


@dataclasses.dataclass(frozen=True)
class BackendInfo:
    backend_id: str
    input_px: int
    grid: tuple[int, int]
    channels: int
    patch_px: int
    stride_px: int
    featurize: Callable[[np.ndarray], FeatureMap] | None = None

    @property
    def can_featurize(self) -> bool:
        return self.featurize is not None


_REGISTRY: dict[str, BackendInfo] = {}


def register_backend(info: BackendInfo):
    _REGISTRY[info.backend_id] = info


def get_backend(backend_id: str) -> BackendInfo:
    try:
        return _REGISTRY[backend_id]
    except KeyError:
        known = ", ".join(sorted(_REGISTRY))
        raise ConfigError(f"unknown backend {backend_id!r} (known: {known})") from None


def list_backends() -> list[BackendInfo]:
    return [_REGISTRY[k] for k in sorted(_REGISTRY)]


register_backend(
    BackendInfo(
        backend_id="filterbank",
        input_px=252,
        grid=(35, 35),
        channels=16,
        patch_px=14,
        stride_px=7,
        featurize=filterbank_featurize,
    )
)

register_backend(
    BackendInfo(
        backend_id="dinov2-vits14",
        input_px=252,
        grid=(35, 35),
        channels=384,
        patch_px=14,
        stride_px=7,
        featurize=None,
    )
)
