"""Deterministic synthetic microscope scenes for desk-scale validation.

Three archetypes mimic the monitored stages: a T-tipped needle shaft, a probe
loop (ring) on a holder line, and a cortex-like textured color field crossed
by dark vessel curves (with an exact vessel mask).  Anomalies are injected
from a *separate* seeded stream, so a scene and its anomalous variant share
the identical base image (matched pairs for ablation studies).

Normal cortex scenes keep vessels clear of an exclusion disc around the
anchor (the implantation point must be vessel-free); anomaly magnitude scales
contrast times area so tests can sit on either side of detectability.
"""

from __future__ import annotations

import dataclasses
import json
import math
import zlib
from pathlib import Path

import numpy as np

from .backends import resize_bilinear
from .errors import InvalidArgumentError, IoError
from .fmap import atomic_write_bytes
from .netpbm import write_pnm

KINDS = ("needle", "loop", "cortex")
ANOMALY_TYPES = ("blob", "missing-structure", "extra-vessel", "occlusion")
LOCATIONS = ("near-anchor", "far-from-anchor")

VESSEL_EXCLUSION_PX = 48   # normal scenes keep vessels this far from the anchor
_NEAR_MAX = 18
_FAR_RANGE = (78, 112)


@dataclasses.dataclass(frozen=True)
class AnomalySpec:
    type: str
    location: str = "near-anchor"
    magnitude: float = 1.0


@dataclasses.dataclass(frozen=True)
class SceneSpec:
    kind: str
    seed: int
    anomaly: AnomalySpec | None = None
    noise_level: float = 1.0
    jitter_px: int = 12
    raw_px: int = 320
    roi_px: int = 256

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"unknown scene kind {self.kind!r} (valid: {KINDS})")
        if self.anomaly is not None:
            if self.anomaly.type not in ANOMALY_TYPES:
                raise InvalidArgumentError(f"unknown anomaly type {self.anomaly.type!r}")
            if self.anomaly.location not in LOCATIONS:
                raise InvalidArgumentError(f"unknown anomaly location {self.anomaly.location!r}")
        margin = self.roi_px // 2 + self.jitter_px
        if self.raw_px < 2 * margin:
            raise InvalidArgumentError(
                f"raw_px {self.raw_px} too small for roi_px {self.roi_px} with "
                f"jitter {self.jitter_px}"
            )


@dataclasses.dataclass(frozen=True)
class SceneRender:
    image: np.ndarray              # uint8 (S, S) or (S, S, 3)
    anchor_px: tuple[int, int]     # (u, v) in raw coords
    label: str
    vessel_mask: np.ndarray | None  # uint8 (roi, roi), 0 cortex / 255 vessel


def _rng(tag: str, seed: int) -> np.random.Generator:
    # crc32 keyes the stream by purpose while staying stable across processes
    return np.random.default_rng(np.random.SeedSequence([zlib.crc32(tag.encode()), int(seed)]))


def _value_noise(rng, size: int, cells: int, amp: float) -> np.ndarray:
    coarse = rng.standard_normal((cells, cells))
    return resize_bilinear(coarse, size, size) * amp


def _stamp_disc(field: np.ndarray, cx: float, cy: float, r: float):
    """Max-combine a soft disc into a weight field (local window only)."""
    size = field.shape[0]
    x0 = max(int(cx - r - 1), 0)
    x1 = min(int(cx + r + 2), size)
    y0 = max(int(cy - r - 1), 0)
    y1 = min(int(cy + r + 2), size)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d = np.hypot(xx - cx, yy - cy)
    w = np.clip(r + 0.5 - d, 0.0, 1.0)
    np.maximum(field[y0:y1, x0:x1], w, out=field[y0:y1, x0:x1])


def _stamp_path(field: np.ndarray, pts: np.ndarray, width: float):
    for x, y in pts:
        _stamp_disc(field, x, y, width / 2.0)


def _stamp_segment(field, p0, p1, width):
    n = max(int(np.hypot(p1[0] - p0[0], p1[1] - p0[1]) * 2), 2)
    t = np.linspace(0.0, 1.0, n)
    pts = np.outer(1 - t, p0) + np.outer(t, p1)
    _stamp_path(field, pts, width)


def _ring_weight(size: int, cx: float, cy: float, radius: float, width: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    d = np.hypot(xx - cx, yy - cy)
    return np.clip(width / 2.0 + 0.5 - np.abs(d - radius), 0.0, 1.0)


def _blend_gray(img: np.ndarray, weight: np.ndarray, value: float):
    img += weight * (value - img)


def _blend_rgb(img: np.ndarray, weight: np.ndarray, color) -> None:
    for c in range(3):
        img[:, :, c] += weight * (color[c] - img[:, :, c])


def _anchor(rng, spec: SceneSpec) -> tuple[int, int]:
    c = spec.raw_px // 2
    j = spec.jitter_px
    if j == 0:
        return (c, c)
    return (int(c + rng.integers(-j, j + 1)), int(c + rng.integers(-j, j + 1)))


def _anomaly_center(rng, anomaly: AnomalySpec, anchor) -> tuple[float, float]:
    if anomaly.location == "near-anchor":
        dx = rng.uniform(-_NEAR_MAX, _NEAR_MAX)
        dy = rng.uniform(-_NEAR_MAX, _NEAR_MAX)
    else:
        lo, hi = _FAR_RANGE
        dx = rng.uniform(lo, hi) * rng.choice([-1.0, 1.0])
        dy = rng.uniform(lo, hi) * rng.choice([-1.0, 1.0])
    return (anchor[0] + dx, anchor[1] + dy)


# ---------------------------------------------------------------- needle ---

def _needle_base(rng, spec: SceneSpec):
    size = spec.raw_px
    anchor = _anchor(rng, spec)
    img = np.full((size, size), 52.0)
    img += np.linspace(-10, 10, size)[:, None] * rng.uniform(0.5, 1.5)
    img += _value_noise(rng, size, 8, 7.0 * spec.noise_level)
    img += rng.normal(0.0, 2.5 * spec.noise_level, (size, size))

    tilt = rng.uniform(-0.25, 0.25)
    base_pt = (anchor[0] + math.sin(tilt) * (size * 0.9), anchor[1] + math.cos(tilt) * (size * 0.9))
    shaft_w = rng.uniform(3.8, 4.8)
    shaft_val = rng.uniform(180, 200)
    shaft = np.zeros((size, size))
    _stamp_segment(shaft, base_pt, anchor, shaft_w)
    _blend_gray(img, shaft, shaft_val)

    # T crossbar slightly behind the tip, perpendicular to the shaft
    back = (anchor[0] - math.sin(tilt) * 12, anchor[1] - math.cos(tilt) * 12)
    perp = (math.cos(tilt), -math.sin(tilt))
    half = rng.uniform(9, 13)
    bar = np.zeros((size, size))
    _stamp_segment(
        bar,
        (back[0] - perp[0] * half, back[1] - perp[1] * half),
        (back[0] + perp[0] * half, back[1] + perp[1] * half),
        shaft_w * 0.9,
    )
    _blend_gray(img, bar, shaft_val + 12)
    ctx = {"bar": (back, perp, half, shaft_w), "background": 52.0}
    return img, anchor, ctx


# ------------------------------------------------------------------ loop ---

def _loop_base(rng, spec: SceneSpec):
    size = spec.raw_px
    anchor = _anchor(rng, spec)
    img = np.full((size, size), 48.0)
    img += np.linspace(8, -8, size)[None, :] * rng.uniform(0.5, 1.5)
    img += _value_noise(rng, size, 8, 7.0 * spec.noise_level)
    img += rng.normal(0.0, 2.5 * spec.noise_level, (size, size))

    radius = rng.uniform(21, 27)
    holder = np.zeros((size, size))
    _stamp_segment(holder, (anchor[0] + rng.uniform(-15, 15), -10),
                   (anchor[0], anchor[1] - radius), 3.0)
    _blend_gray(img, holder, 120.0)
    ring = _ring_weight(size, anchor[0], anchor[1], radius, rng.uniform(2.8, 3.6))
    _blend_gray(img, ring, rng.uniform(175, 195))
    ctx = {"ring": (anchor, radius), "background": 48.0}
    return img, anchor, ctx


# ---------------------------------------------------------------- cortex ---

def _vessel_line(rng, size: int, anchor, rho: float, max_amp: float = 12.0):
    """A gently meandering vessel whose closest approach to the anchor is ~rho.

    Parametric line plus a bounded sine offset, so the approach distance is
    guaranteed within +-amp of rho (no rejection sampling needed).
    """
    phi = rng.uniform(0.0, 2 * math.pi)
    nx, ny = math.cos(phi), math.sin(phi)
    px, py = anchor[0] + nx * rho, anchor[1] + ny * rho
    tx, ty = -ny, nx
    amp = rng.uniform(3.0, max_amp)
    period = rng.uniform(150.0, 380.0)
    phase = rng.uniform(0.0, 2 * math.pi)
    t = np.arange(-(size + 40.0), size + 41.0, 1.0)
    off = amp * np.sin(2 * math.pi * t / period + phase)
    xs = px + tx * t + nx * off
    ys = py + ty * t + ny * off
    inside = (xs >= -24) & (xs <= size + 24) & (ys >= -24) & (ys <= size + 24)
    return np.stack([xs[inside], ys[inside]], axis=1)


def _cortex_base(rng, spec: SceneSpec):
    size = spec.raw_px
    anchor = _anchor(rng, spec)
    gain = rng.uniform(0.93, 1.07)
    base = np.array([206.0, 158.0, 152.0]) * gain
    img = np.empty((size, size, 3))
    lum = _value_noise(rng, size, 10, 9.0 * spec.noise_level)
    for c in range(3):
        img[:, :, c] = base[c] + lum + _value_noise(rng, size, 20, 4.0 * spec.noise_level)
        img[:, :, c] += rng.normal(0.0, 2.0 * spec.noise_level, (size, size))

    # normal scenes keep the implantation point vessel-free: rho - amp stays
    # outside the exclusion disc.  Vessels are added until ROI coverage is
    # comfortably inside the expected band.
    half = spec.roi_px // 2
    tlx, tly = anchor[0] - half, anchor[1] - half
    mask_w = np.zeros((size, size))
    rho_lo = VESSEL_EXCLUSION_PX + 14.0
    rho_hi = max(size * 0.38, rho_lo + 10.0)
    n_vessels = int(rng.integers(3, 5))
    for i in range(12):
        if i >= n_vessels:
            roi_w = mask_w[tly : tly + spec.roi_px, tlx : tlx + spec.roi_px]
            if (roi_w > 0.5).mean() >= 0.07:
                break
        width = rng.uniform(6.5, 9.0)
        rho = rng.uniform(rho_lo, rho_hi)
        pts = _vessel_line(rng, size, anchor, rho)
        _stamp_path(mask_w, pts, width)
    _blend_rgb(img, mask_w * 0.85, (118.0, 62.0, 60.0))

    # benign tissue specks in the periphery: sparse normal variation that only
    # the anchor-distant region should be asked to tolerate
    for _ in range(int(rng.integers(0, 4))):
        ang = rng.uniform(0.0, 2 * math.pi)
        dist = rng.uniform(VESSEL_EXCLUSION_PX + 12.0, half - 12.0)
        cx = anchor[0] + math.cos(ang) * dist
        cy = anchor[1] + math.sin(ang) * dist
        w = np.zeros((size, size))
        _stamp_disc(w, cx, cy, rng.uniform(2.5, 6.0))
        _blend_rgb(img, w * 0.9, (126.0, 74.0, 72.0))

    ctx = {"vessel_weight": mask_w, "base": base}
    return img, anchor, ctx


# ------------------------------------------------------------- anomalies ---

def _inject_gray(rng, img, ctx, anchor, anomaly: AnomalySpec, kind: str):
    m = anomaly.magnitude
    if anomaly.type == "blob":
        cx, cy = _anomaly_center(rng, anomaly, anchor)
        r = min(5.0 + 3.0 * m, 22.0)
        w = np.zeros(img.shape)
        _stamp_disc(w, cx, cy, r)
        sign = rng.choice([-1.0, 1.0])
        _blend_gray(img, w, np.clip(img[int(cy) % img.shape[0], int(cx) % img.shape[1]]
                                    + sign * (45.0 + 45.0 * m), 0, 255))
    elif anomaly.type == "occlusion":
        cx, cy = _anomaly_center(rng, anomaly, anchor)
        r = 12.0 + 6.0 * m
        w = np.zeros(img.shape)
        _stamp_disc(w, cx, cy, r)
        _blend_gray(img, w, 96.0)
    elif anomaly.type == "extra-vessel":
        # stray fiber crossing the scene
        cx, cy = _anomaly_center(rng, anomaly, anchor)
        ang = rng.uniform(0, math.pi)
        dx, dy = math.cos(ang) * 200, math.sin(ang) * 200
        w = np.zeros(img.shape)
        _stamp_segment(w, (cx - dx, cy - dy), (cx + dx, cy + dy), 3.0 + 1.5 * m)
        _blend_gray(img, w, 160.0)
    elif anomaly.type == "missing-structure":
        bg = ctx["background"]
        w = np.zeros(img.shape)
        if kind == "needle":
            (back, perp, half, shaft_w) = ctx["bar"]
            _stamp_segment(
                w,
                (back[0] - perp[0] * (half + 2), back[1] - perp[1] * (half + 2)),
                (back[0] + perp[0] * (half + 2), back[1] + perp[1] * (half + 2)),
                shaft_w * 1.6,
            )
        else:
            (center, radius) = ctx["ring"]
            a0 = rng.uniform(0, 2 * math.pi)
            span = (0.8 + 0.8 * min(m, 1.5)) * math.pi / 2
            for t in np.linspace(a0, a0 + span, max(int(radius * span * 2), 8)):
                _stamp_disc(w, center[0] + radius * math.cos(t),
                            center[1] + radius * math.sin(t), 3.5)
        _blend_gray(img, w, bg + rng.normal(0.0, 1.0))


def _inject_cortex(rng, img, ctx, anchor, anomaly: AnomalySpec, mask_w: np.ndarray):
    m = anomaly.magnitude
    if anomaly.type == "extra-vessel":
        rho = rng.uniform(0.0, 6.0) if anomaly.location == "near-anchor" \
            else rng.uniform(*_FAR_RANGE)
        pts = _vessel_line(rng, img.shape[0], anchor, rho, max_amp=5.0)
        w = np.zeros(img.shape[:2])
        _stamp_path(w, pts, 6.0 + 2.0 * m)
        _blend_rgb(img, w * 0.85, (118.0, 62.0, 60.0))
        np.maximum(mask_w, w, out=mask_w)
    elif anomaly.type == "blob":
        cx, cy = _anomaly_center(rng, anomaly, anchor)
        w = np.zeros(img.shape[:2])
        _stamp_disc(w, cx, cy, min(6.0 + 4.0 * m, 26.0))
        _blend_rgb(img, w * 0.9, (150.0, 40.0, 40.0))   # bleeding: saturated dark red
    elif anomaly.type == "occlusion":
        cx, cy = _anomaly_center(rng, anomaly, anchor)
        w = np.zeros(img.shape[:2])
        _stamp_disc(w, cx, cy, 13.0 + 6.0 * m)
        _blend_rgb(img, w, (92.0, 92.0, 96.0))
    elif anomaly.type == "missing-structure":
        cx, cy = _anomaly_center(rng, anomaly, anchor)
        w = np.zeros(img.shape[:2])
        _stamp_disc(w, cx, cy, 14.0 + 6.0 * m)
        _blend_rgb(img, w * 0.9, ctx["base"] * 1.12)    # texture wiped flat/pale


# ------------------------------------------------------------ public API ---

def gen_scene(spec: SceneSpec) -> SceneRender:
    """Render one scene; identical specs produce bit-identical outputs."""
    rng = _rng("scene", spec.seed)
    if spec.kind == "needle":
        img, anchor, ctx = _needle_base(rng, spec)
    elif spec.kind == "loop":
        img, anchor, ctx = _loop_base(rng, spec)
    else:
        img, anchor, ctx = _cortex_base(rng, spec)

    vessel_mask = None
    if spec.anomaly is not None:
        arng = _rng("anomaly", spec.seed)
        if spec.kind == "cortex":
            _inject_cortex(arng, img, ctx, anchor, spec.anomaly, ctx["vessel_weight"])
        else:
            _inject_gray(arng, img, ctx, anchor, spec.anomaly, spec.kind)

    if spec.kind == "cortex":
        half = spec.roi_px // 2
        tlx, tly = anchor[0] - half, anchor[1] - half
        crop = ctx["vessel_weight"][tly : tly + spec.roi_px, tlx : tlx + spec.roi_px]
        vessel_mask = np.where(crop > 0.5, 255, 0).astype(np.uint8)

    image = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return SceneRender(
        image=image,
        anchor_px=anchor,
        label="anomalous" if spec.anomaly is not None else "normal",
        vessel_mask=vessel_mask,
    )


_DEFAULT_CHECKPOINT = {"needle": "needle", "loop": "fme", "cortex": "cortex"}


def _item_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


def gen_dataset(out_dir, kind: str, n_normal: int, n_anomalous: int, seed: int,
                checkpoint: str | None = None, raw_px: int = 320, roi_px: int = 256,
                anomaly_location: str = "near-anchor",
                anomaly_types: tuple[str, ...] | None = None) -> dict:
    """Write scene images, masks (cortex), and a manifest; fully seed-determined."""
    if n_normal < 0 or n_anomalous < 0:
        raise InvalidArgumentError("scene counts must be non-negative")
    if kind not in KINDS:
        raise InvalidArgumentError(f"unknown scene kind {kind!r} (valid: {KINDS})")
    out = Path(out_dir)
    try:
        (out / "images").mkdir(parents=True, exist_ok=True)
        (out / "masks").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create dataset directory {out}: {exc}") from exc
    ck = checkpoint or _DEFAULT_CHECKPOINT[kind]
    types = tuple(anomaly_types) if anomaly_types else (
        ("extra-vessel", "blob", "occlusion", "missing-structure") if kind == "cortex"
        else ("blob", "occlusion", "missing-structure", "extra-vessel")
    )
    ext = "ppm" if kind == "cortex" else "pgm"
    entries = []
    for i in range(n_normal + n_anomalous):
        item_seed = _item_seed(seed, i)
        anomaly = None
        label = "normal"
        if i >= n_normal:
            j = i - n_normal
            mag_rng = _rng("magnitude", item_seed)
            anomaly = AnomalySpec(
                type=types[j % len(types)],
                location=anomaly_location,
                magnitude=float(mag_rng.uniform(0.9, 1.6)),
            )
            label = "anomalous"
        render = gen_scene(SceneSpec(kind=kind, seed=item_seed, anomaly=anomaly,
                                     raw_px=raw_px, roi_px=roi_px))
        name = f"{i:03d}_{label}"
        img_rel = f"images/{name}.{ext}"
        write_pnm(render.image, out / img_rel)
        entry = {
            "path": img_rel,
            "kind": "image",
            "label": label,
            "checkpoint": ck,
            "anchor_px": list(render.anchor_px),
        }
        if render.vessel_mask is not None:
            mask_rel = f"masks/{name}.pgm"
            write_pnm(render.vessel_mask, out / mask_rel)
            entry["vessel_mask_path"] = mask_rel
        entries.append(entry)
    manifest_path = out / "manifest.json"
    atomic_write_bytes(manifest_path, (json.dumps(entries, indent=2) + "\n").encode())
    return {
        "manifest": str(manifest_path),
        "normal": n_normal,
        "anomalous": n_anomalous,
        "checkpoint": ck,
        "kind": kind,
    }
