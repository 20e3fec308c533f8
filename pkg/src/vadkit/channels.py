"""Scene-specific feature channel selection by signal-to-noise ranking.

Two scores over a stack of K' normal feature maps:

* generic: per location and channel, beta = mean^2 / var (variance floored at
  1e-12), averaged over all grid locations;
* vessel: beta = (mu_cortex - mu_vessel)^2 / (sigma_cortex * sigma_vessel)
  with the two populations pooled over all annotated patches of all images.

The top (or, for the ablation baseline, bottom) fraction of channels by score
forms a :class:`ChannelMask`.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .errors import FormatError, InsufficientDataError, InvalidArgumentError, IoError
from .fmap import FeatureMap, atomic_write_bytes

VARIANCE_FLOOR = 1e-12


@dataclasses.dataclass(frozen=True)
class ChannelMask:
    kept: tuple[int, ...]           # ascending channel indices
    scores: tuple[float, ...]       # beta_c for every raw channel
    mode: str                       # "generic" | "vessel"
    fraction: float
    source: dict = dataclasses.field(default_factory=dict)

    @property
    def n_raw(self) -> int:
        return len(self.scores)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "fraction": self.fraction,
            "kept": list(self.kept),
            "scores": list(self.scores),
            "source": self.source,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ChannelMask":
        return cls(
            kept=tuple(int(k) for k in doc["kept"]),
            scores=tuple(float(s) for s in doc["scores"]),
            mode=str(doc["mode"]),
            fraction=float(doc["fraction"]),
            source=dict(doc.get("source", {})),
        )


@dataclasses.dataclass(frozen=True)
class VesselAnnotation:
    """A binary vessel mask at ROI pixel resolution plus derived grid labels."""

    mask_px: np.ndarray        # bool (roi, roi)
    patch_labels: np.ndarray   # bool (H0, W0), True = vessel

    @classmethod
    def from_mask(cls, mask_px: np.ndarray, input_px: int, patch_px: int,
                  stride_px: int, grid: tuple[int, int],
                  threshold: float = 0.5) -> "VesselAnnotation":
        """Label a grid patch as vessel when >= ``threshold`` of its pixels are.

        The mask is sampled at the same corner-aligned positions the resize
        uses, so patch footprints match the featurization geometry.
        """
        m = np.asarray(mask_px)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise InvalidArgumentError(f"vessel mask must be square 2-d, got shape {m.shape}")
        m = m > 0
        src = np.rint(np.arange(input_px) * ((m.shape[0] - 1) / (input_px - 1))).astype(int)
        sampled = m[np.ix_(src, src)].astype(np.float64)
        win = np.lib.stride_tricks.sliding_window_view(sampled, (patch_px, patch_px))
        frac = win[::stride_px, ::stride_px].mean(axis=(2, 3))
        if frac.shape != grid:
            raise InvalidArgumentError(f"grid {grid} incompatible with mask sampling {frac.shape}")
        return cls(mask_px=m, patch_labels=frac >= threshold)


def _stack(maps) -> np.ndarray:
    maps = list(maps)
    if len(maps) < 2:
        raise InsufficientDataError(f"channel scoring needs K' >= 2 maps, got {len(maps)}")
    shape = maps[0].shape
    for m in maps:
        if m.shape != shape:
            raise InvalidArgumentError(f"feature maps disagree in shape: {m.shape} vs {shape}")
    return np.stack([m.data for m in maps]).astype(np.float64)


def snr_generic(maps: list[FeatureMap]) -> np.ndarray:
    """Per-channel SNR beta_c averaged over all grid locations."""
    arr = _stack(maps)                       # (K, H, W, C)
    mu = arr.mean(axis=0)
    var = arr.var(axis=0, ddof=1)
    beta = mu ** 2 / np.maximum(var, VARIANCE_FLOOR)
    return beta.mean(axis=(0, 1))


def snr_vessel(maps: list[FeatureMap], annotations: list[VesselAnnotation]) -> np.ndarray:
    """Vessel-contrast SNR for scenes where anomalies relate to vasculature."""
    arr = _stack(maps)
    if len(annotations) != arr.shape[0]:
        raise InvalidArgumentError(
            f"{arr.shape[0]} maps but {len(annotations)} vessel annotations"
        )
    vessel_rows, cortex_rows = [], []
    for k, ann in enumerate(annotations):
        labels = np.asarray(ann.patch_labels, dtype=bool)
        if labels.shape != arr.shape[1:3]:
            raise InvalidArgumentError(
                f"annotation grid {labels.shape} does not match map grid {arr.shape[1:3]}"
            )
        vessel_rows.append(arr[k][labels])
        cortex_rows.append(arr[k][~labels])
    vessel = np.concatenate(vessel_rows)
    cortex = np.concatenate(cortex_rows)
    for name, pop in (("vessel", vessel), ("cortex", cortex)):
        if pop.shape[0] == 0:
            raise InsufficientDataError(f"no {name} patches in the annotated stack")

    def _mu_sigma(pop):
        mu = pop.mean(axis=0)
        sigma = pop.std(axis=0, ddof=1) if pop.shape[0] > 1 else np.zeros(pop.shape[1])
        return mu, sigma

    mu_c, sig_c = _mu_sigma(cortex)
    mu_v, sig_v = _mu_sigma(vessel)
    return (mu_c - mu_v) ** 2 / np.maximum(sig_c * sig_v, VARIANCE_FLOOR)


def select_top(scores, fraction: float, *, bottom: bool = False,
               mode: str = "generic", source: dict | None = None) -> ChannelMask:
    """Keep the floor(fraction * C) best-scoring channels (ties to lower index).

    With ``bottom=True`` the worst-scoring channels are kept instead (ablation
    baseline); ties then resolve toward higher index so that top and bottom
    halves partition an even channel set.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise InvalidArgumentError("scores must be a non-empty 1-d sequence")
    if not 0 < fraction <= 1:
        raise InvalidArgumentError(f"channel fraction must be in (0, 1], got {fraction}")
    count = math.floor(fraction * scores.size)
    if count < 1:
        raise InvalidArgumentError(
            f"fraction {fraction} of {scores.size} channels keeps none"
        )
    order = sorted(
        range(scores.size),
        key=(lambda c: (scores[c], -c)) if bottom else (lambda c: (-scores[c], c)),
    )
    kept = tuple(sorted(order[:count]))
    return ChannelMask(
        kept=kept,
        scores=tuple(float(s) for s in scores),
        mode=mode,
        fraction=float(fraction),
        source=dict(source or {}),
    )


def save_mask(mask: ChannelMask, path):
    blob = json.dumps(mask.to_json(), sort_keys=True, indent=2) + "\n"
    atomic_write_bytes(path, blob.encode())


def load_mask(path) -> ChannelMask:
    p = Path(path)
    if not p.is_file():
        raise IoError(f"no such channel-mask file: {p}")
    try:
        doc = json.loads(p.read_text())
        return ChannelMask.from_json(doc)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{p}: malformed channel mask ({exc})") from exc
