"""Checkpoint configuration: per-checkpoint anchor offset, flip set, sampling
triplet, regularization, channel fraction, SNR mode, and backend choice.

The shipped defaults cover the four monitored implantation stages: needle tip
and probe-loop checks flip once (vertical resp. horizontal), the hooking check
uses no flips, and the implantation-point check flips in every direction and
selects channels by vessel contrast.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .backends import get_backend
from .errors import ConfigError, IoError
from .roi import FLIP_NAMES, grid_anchor, nominal_anchor_px

SNR_MODES = ("generic", "vessel")


@dataclasses.dataclass(frozen=True)
class CheckpointConfig:
    name: str
    anchor_offset_px: tuple[int, int] = (0, 0)
    flips: tuple[str, ...] = ()
    lam: float = 6.0
    a0: int = 0
    a1: int = 2
    epsilon: float = 0.01
    channel_fraction: float = 0.5
    snr_mode: str = "generic"
    backend: str = "filterbank"
    roi_px: int = 256

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "anchor_offset_px": list(self.anchor_offset_px),
            "flips": list(self.flips),
            "lambda": self.lam,
            "a0": self.a0,
            "a1": self.a1,
            "epsilon": self.epsilon,
            "channel_fraction": self.channel_fraction,
            "snr_mode": self.snr_mode,
            "backend": self.backend,
            "roi_px": self.roi_px,
        }

    @classmethod
    def from_json(cls, name: str, doc: dict) -> "CheckpointConfig":
        return cls(
            name=name,
            anchor_offset_px=tuple(doc.get("anchor_offset_px", (0, 0))),
            flips=tuple(doc.get("flips", ())),
            lam=float(doc.get("lambda", 6.0)),
            a0=int(doc.get("a0", 0)),
            a1=int(doc.get("a1", 2)),
            epsilon=float(doc.get("epsilon", 0.01)),
            channel_fraction=float(doc.get("channel_fraction", 0.5)),
            snr_mode=str(doc.get("snr_mode", "generic")),
            backend=str(doc.get("backend", "filterbank")),
            roi_px=int(doc.get("roi_px", 256)),
        )


def validate_config(cfg: CheckpointConfig) -> CheckpointConfig:
    """Full load-time validation, including flip/anchor-grid compatibility.

    Enabled flips must leave the nominal anchor's grid coordinate fixed:
    normality is fitted per location across the augmented samples, which only
    makes sense when they all share the sampling geometry.
    """
    def bad(msg):
        raise ConfigError(f"checkpoint {cfg.name!r}: {msg}")

    if cfg.lam <= 0:
        bad(f"lambda must be positive, got {cfg.lam}")
    if cfg.a0 < 0 or cfg.a0 > cfg.a1:
        bad(f"need 0 <= a0 <= a1, got a0={cfg.a0}, a1={cfg.a1}")
    if cfg.epsilon <= 0:
        bad(f"epsilon must be positive, got {cfg.epsilon}")
    if not 0 < cfg.channel_fraction <= 1:
        bad(f"channel_fraction must be in (0, 1], got {cfg.channel_fraction}")
    if cfg.snr_mode not in SNR_MODES:
        bad(f"unknown snr_mode {cfg.snr_mode!r} (valid: {SNR_MODES})")
    if cfg.roi_px < 2:
        bad(f"roi_px too small: {cfg.roi_px}")
    unknown = [f for f in cfg.flips if f not in FLIP_NAMES]
    if unknown:
        bad(f"unknown flips {unknown} (valid: {FLIP_NAMES})")
    if len(set(cfg.flips)) != len(cfg.flips):
        bad(f"duplicate flips in {cfg.flips}")
    backend = get_backend(cfg.backend)
    if cfg.flips:
        anchor = grid_anchor(nominal_anchor_px(cfg), cfg.roi_px, backend)
        gh, gw = backend.grid
        for f in cfg.flips:
            ok = True
            if f in ("horizontal", "both"):
                ok &= anchor.x == (gw - 1) - anchor.x
            if f in ("vertical", "both"):
                ok &= anchor.y == (gh - 1) - anchor.y
            if not ok:
                bad(
                    f"flip {f!r} moves the anchor grid coordinate "
                    f"({anchor.x:g}, {anchor.y:g}) on the {gh}x{gw} grid; flips require "
                    "a flip-invariant anchor so augmented samples share one geometry"
                )
    return cfg


def default_configs() -> dict[str, CheckpointConfig]:
    cfgs = [
        CheckpointConfig(name="needle", flips=("vertical",), lam=6.0, a0=0, a1=2),
        CheckpointConfig(name="fme", flips=("horizontal",), lam=6.0, a0=0, a1=2),
        CheckpointConfig(name="hook", flips=(), lam=6.0, a0=0, a1=2),
        CheckpointConfig(
            name="cortex",
            flips=("vertical", "horizontal", "both"),
            lam=3.0,
            a0=1,
            a1=3,
            snr_mode="vessel",
        ),
    ]
    return {c.name: validate_config(c) for c in cfgs}


def load_configs(path) -> dict[str, CheckpointConfig]:
    """Load a JSON config document: {"checkpoints": {name: {...}}}."""
    p = Path(path)
    if not p.is_file():
        raise IoError(f"no such config file: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: not valid JSON ({exc})") from exc
    section = doc.get("checkpoints")
    if not isinstance(section, dict) or not section:
        raise ConfigError(f"{p}: expected a non-empty 'checkpoints' object")
    out = {}
    for name, body in section.items():
        if not isinstance(body, dict):
            raise ConfigError(f"{p}: checkpoint {name!r} must be an object")
        out[name] = validate_config(CheckpointConfig.from_json(name, body))
    return out


def resolve_checkpoint(name: str, config_path=None) -> CheckpointConfig:
    cfgs = load_configs(config_path) if config_path else default_configs()
    if name not in cfgs:
        raise ConfigError(f"unknown checkpoint {name!r} (known: {', '.join(sorted(cfgs))})")
    return cfgs[name]
