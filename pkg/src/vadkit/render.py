"""Anomaly heatmap rendering: JET overlay plus circle markers on hot windows."""

from __future__ import annotations

import numpy as np

from .backends import BackendInfo
from .bank import ScoreResult
from .errors import InvalidArgumentError
from .netpbm import write_pnm
from .pgs import SamplingGeometry
from .roi import RoiImage


def jet(t: np.ndarray) -> np.ndarray:
    """Classic JET colormap; t in [0, 1] -> uint8 RGB."""
    t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
    r = np.clip(1.5 - np.abs(4.0 * t - 3.0), 0.0, 1.0)
    g = np.clip(1.5 - np.abs(4.0 * t - 2.0), 0.0, 1.0)
    b = np.clip(1.5 - np.abs(4.0 * t - 1.0), 0.0, 1.0)
    return np.rint(np.stack([r, g, b], axis=-1) * 255.0).astype(np.uint8)


def anomalous_windows(result: ScoreResult, tau: float) -> list[int]:
    """Window indices whose location score exceeds the threshold."""
    return [int(i) for i in np.flatnonzero(result.location_scores > tau)]


def _cell_to_roi(coord: float, backend: BackendInfo, roi_px: int) -> float:
    # cell coordinate -> input pixel (patch center) -> ROI pixel
    u_input = coord * backend.stride_px + backend.patch_px / 2.0
    return u_input * ((roi_px - 1) / (backend.input_px - 1))


def render_heatmap(result: ScoreResult, geometry: SamplingGeometry, roi: RoiImage,
                   tau: float, out_path, backend: BackendInfo) -> dict:
    """Paint each window's score over its pixel footprint (overlaps keep the max),
    overlay at alpha 0.5, and mark every window scoring above tau.
    """
    if len(result.location_scores) != geometry.n_windows:
        raise InvalidArgumentError("score result does not match geometry window count")
    side = roi.side
    scale = (side - 1) / (backend.input_px - 1)
    field = np.zeros((side, side))
    for s_n, w in zip(result.location_scores, geometry.windows):
        y0c, x0c, y1c, x1c = w.extent
        px_y0 = int(np.floor(y0c * backend.stride_px * scale))
        px_x0 = int(np.floor(x0c * backend.stride_px * scale))
        px_y1 = int(np.ceil(((y1c - 1) * backend.stride_px + backend.patch_px) * scale))
        px_x1 = int(np.ceil(((x1c - 1) * backend.stride_px + backend.patch_px) * scale))
        region = field[max(px_y0, 0) : min(px_y1, side), max(px_x0, 0) : min(px_x1, side)]
        np.maximum(region, s_n, out=region)

    vmax = max(tau * 2.0, float(result.location_scores.max()))
    heat = jet(field / vmax if vmax > 0 else field)

    base = roi.pixels.astype(np.float64)
    if base.ndim == 2:
        base = np.repeat(base[:, :, None], 3, axis=2)
    out = np.clip(np.rint(0.5 * base + 0.5 * heat), 0, 255).astype(np.uint8)

    hot = anomalous_windows(result, tau)
    yy, xx = np.mgrid[0:side, 0:side]
    for n in hot:
        w = geometry.windows[n]
        cx = _cell_to_roi(w.center.x, backend, side)
        cy = _cell_to_roi(w.center.y, backend, side)
        ring = np.abs(np.hypot(xx - cx, yy - cy) - 6.0) <= 1.2
        out[ring] = (255, 255, 255)

    write_pnm(out, out_path)
    return {"path": str(out_path), "markers": len(hot), "vmax": float(vmax)}
