"""Anchor-aligned ROI extraction, flip augmentation, and featurization glue.

Anchors are pixel coordinates (u, v) = (column, row).  The ROI is the square
of side roi_px whose center is anchor + configured offset, shifted minimally
to stay inside the raw image; the shift is recorded and the anchor coordinate
inside the ROI stays truthful.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .backends import BackendInfo
from .errors import ConfigError, InvalidArgumentError, InvalidInputError
from .fmap import FeatureMap, GridPoint, read_fmap

FLIP_NAMES = ("vertical", "horizontal", "both")


@dataclasses.dataclass(frozen=True)
class RoiImage:
    pixels: np.ndarray                     # uint8 (roi, roi) or (roi, roi, 3)
    anchor_px: tuple[int, int]             # (u, v) within the ROI
    applied_shift_px: tuple[int, int] = (0, 0)
    source: str = ""

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels)
        if px.dtype != np.uint8:
            raise InvalidArgumentError(f"ROI pixels must be uint8, got {px.dtype}")
        if px.ndim not in (2, 3) or px.shape[0] != px.shape[1]:
            raise InvalidArgumentError(f"ROI must be square (H, W[, 3]), got shape {px.shape}")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)
        u, v = self.anchor_px
        side = px.shape[0]
        if not (0 <= u < side and 0 <= v < side):
            raise InvalidArgumentError(f"anchor ({u}, {v}) outside ROI of side {side}")

    @property
    def side(self) -> int:
        return self.pixels.shape[0]


def extract_roi(raw: np.ndarray, anchor_px, config, roi_px: int | None = None,
                source: str = "") -> RoiImage:
    """Crop the anchor-aligned ROI, clamping minimally at image borders."""
    raw = np.asarray(raw)
    side = int(roi_px if roi_px is not None else config.roi_px)
    h, w = raw.shape[0], raw.shape[1]
    if h < side or w < side:
        raise InvalidInputError(f"raw image {h}x{w} is smaller than the {side}px ROI")
    u, v = int(anchor_px[0]), int(anchor_px[1])
    du, dv = config.anchor_offset_px
    half = side // 2
    ideal_x = u + int(du) - half
    ideal_y = v + int(dv) - half
    tl_x = min(max(ideal_x, 0), w - side)
    tl_y = min(max(ideal_y, 0), h - side)
    anchor_in = (u - tl_x, v - tl_y)
    if not (0 <= anchor_in[0] < side and 0 <= anchor_in[1] < side):
        raise InvalidInputError(
            f"anchor ({u}, {v}) falls outside the ROI after offset {du, dv} and clamping"
        )
    crop = np.ascontiguousarray(raw[tl_y : tl_y + side, tl_x : tl_x + side])
    return RoiImage(
        pixels=crop,
        anchor_px=anchor_in,
        applied_shift_px=(tl_x - ideal_x, tl_y - ideal_y),
        source=source,
    )


def flip_roi(roi: RoiImage, flip: str) -> RoiImage:
    """Mirror pixels about the ROI's central axis and transform the anchor."""
    if flip not in FLIP_NAMES:
        raise InvalidArgumentError(f"unknown flip {flip!r} (valid: {FLIP_NAMES})")
    px = roi.pixels
    u, v = roi.anchor_px
    last = roi.side - 1
    if flip in ("vertical", "both"):
        px = px[::-1]
        v = last - v
    if flip in ("horizontal", "both"):
        px = px[:, ::-1]
        u = last - u
    return RoiImage(
        pixels=np.ascontiguousarray(px),
        anchor_px=(u, v),
        applied_shift_px=roi.applied_shift_px,
        source=roi.source,
    )


def augment_flips(roi: RoiImage, flips) -> list[RoiImage]:
    """The original ROI followed by each enabled flip (canonical order)."""
    flips = tuple(flips)
    for f in flips:
        if f not in FLIP_NAMES:
            raise InvalidArgumentError(f"unknown flip {f!r} (valid: {FLIP_NAMES})")
    out = [roi]
    for f in FLIP_NAMES:
        if f in flips:
            out.append(flip_roi(roi, f))
    return out


def flip_tags(flips) -> list[str]:
    """Filename/provenance tags matching augment_flips order."""
    tags = ["orig"]
    short = {"vertical": "v", "horizontal": "h", "both": "vh"}
    for f in FLIP_NAMES:
        if f in tuple(flips):
            tags.append(short[f])
    return tags


def anchor_to_grid(u: float, patch_px: int, stride_px: int, size: int) -> int:
    """Grid index of the cell whose patch center is nearest to pixel ``u``."""
    if patch_px <= 0 or stride_px <= 0:
        raise InvalidArgumentError("patch and stride must be positive")
    k = int(np.floor((u - patch_px / 2) / stride_px + 0.5))
    return min(max(k, 0), size - 1)


def roi_to_input(u: float, roi_px: int, input_px: int) -> float:
    """Map an ROI pixel coordinate into backend-input coordinates.

    Uses the same corner-aligned convention as the resize.
    """
    if roi_px == input_px:
        return float(u)
    return u * ((input_px - 1) / (roi_px - 1))


def grid_anchor(anchor_px, roi_px: int, backend: BackendInfo) -> GridPoint:
    """Grid coordinates of an ROI-space anchor under ``backend`` geometry."""
    gh, gw = backend.grid
    x = anchor_to_grid(roi_to_input(anchor_px[0], roi_px, backend.input_px),
                       backend.patch_px, backend.stride_px, gw)
    y = anchor_to_grid(roi_to_input(anchor_px[1], roi_px, backend.input_px),
                       backend.patch_px, backend.stride_px, gh)
    return GridPoint(float(x), float(y))


def nominal_anchor_px(config) -> tuple[int, int]:
    """Anchor position inside an unclamped ROI: floor(roi/2) - offset."""
    half = config.roi_px // 2
    du, dv = config.anchor_offset_px
    u, v = half - int(du), half - int(dv)
    if not (0 <= u < config.roi_px and 0 <= v < config.roi_px):
        raise ConfigError(
            f"checkpoint {config.name!r}: offset {config.anchor_offset_px} pushes the "
            f"anchor outside the {config.roi_px}px ROI"
        )
    return (u, v)


def featurize(roi: RoiImage, backend: BackendInfo, *, checkpoint: str = "",
              source_size: tuple[int, int] | None = None) -> FeatureMap:
    """Resize the ROI to the backend input and run its feature extractor."""
    if not backend.can_featurize:
        raise ConfigError(
            f"backend {backend.backend_id!r} cannot featurize images here; "
            "provide precomputed feature maps instead"
        )
    fm = backend.featurize(roi.pixels)
    if (fm.height, fm.width) != backend.grid or fm.channels != backend.channels:
        raise ConfigError(
            f"backend {backend.backend_id!r} produced {fm.shape}, declared "
            f"{backend.grid + (backend.channels,)}"
        )
    meta = {
        "source_size_px": list(source_size or (roi.side, roi.side)),
        "patch_px": backend.patch_px,
        "stride_px": backend.stride_px,
        "checkpoint": checkpoint,
        "backend": backend.backend_id,
    }
    return FeatureMap(fm.data, meta=meta)


def load_precomputed(path, backend: BackendInfo, checkpoint: str = "") -> FeatureMap:
    """Load an FMAP file, rejecting dims that disagree with the backend."""
    fm = read_fmap(path)
    expected = backend.grid + (backend.channels,)
    if fm.shape != expected:
        raise ConfigError(
            f"{path}: feature map is {fm.shape[0]}x{fm.shape[1]}x{fm.shape[2]}, "
            f"checkpoint {checkpoint!r} expects {expected[0]}x{expected[1]}x{expected[2]}"
        )
    return fm
