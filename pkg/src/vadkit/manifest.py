"""Dataset manifest: a JSON array of image / feature-map entries.

Each entry is {path, kind: "image"|"fmap", label: "normal"|"anomalous"|
"unlabeled", checkpoint, anchor_px: [u, v], vessel_mask_path?}.  Paths are
resolved relative to the manifest file's directory.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .errors import ConfigError, FormatError, IoError
from .fmap import atomic_write_bytes

KINDS = ("image", "fmap")
LABELS = ("normal", "anomalous", "unlabeled")


@dataclasses.dataclass(frozen=True)
class ManifestEntry:
    path: str
    kind: str
    label: str
    checkpoint: str
    anchor_px: tuple[int, int] | None = None
    vessel_mask_path: str | None = None

    def to_json(self) -> dict:
        doc = {
            "path": self.path,
            "kind": self.kind,
            "label": self.label,
            "checkpoint": self.checkpoint,
        }
        if self.anchor_px is not None:
            doc["anchor_px"] = list(self.anchor_px)
        if self.vessel_mask_path is not None:
            doc["vessel_mask_path"] = self.vessel_mask_path
        return doc


def _parse_entry(doc: dict, where: str) -> ManifestEntry:
    try:
        kind = doc["kind"]
        label = doc["label"]
        path = doc["path"]
        checkpoint = doc["checkpoint"]
    except KeyError as exc:
        raise FormatError(f"{where}: manifest entry missing key {exc}") from None
    if kind not in KINDS:
        raise FormatError(f"{where}: bad kind {kind!r} (valid: {KINDS})")
    if label not in LABELS:
        raise FormatError(f"{where}: bad label {label!r} (valid: {LABELS})")
    anchor = doc.get("anchor_px")
    if kind == "image" and anchor is None:
        raise FormatError(f"{where}: image entries need anchor_px")
    if anchor is not None:
        if not (isinstance(anchor, (list, tuple)) and len(anchor) == 2):
            raise FormatError(f"{where}: anchor_px must be [u, v]")
        anchor = (int(anchor[0]), int(anchor[1]))
    return ManifestEntry(
        path=str(path),
        kind=kind,
        label=label,
        checkpoint=str(checkpoint),
        anchor_px=anchor,
        vessel_mask_path=doc.get("vessel_mask_path"),
    )


def load_manifest(path) -> tuple[list[ManifestEntry], Path]:
    """Parse and validate a manifest; returns entries plus their base directory."""
    p = Path(path)
    if not p.is_file():
        raise IoError(f"no such manifest: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{p}: not valid JSON ({exc})") from exc
    if not isinstance(doc, list):
        raise FormatError(f"{p}: manifest must be a JSON array of entries")
    entries = [_parse_entry(e, f"{p}[{i}]") for i, e in enumerate(doc)]
    return entries, p.parent


def save_manifest(entries: list[ManifestEntry], path):
    blob = json.dumps([e.to_json() for e in entries], indent=2) + "\n"
    atomic_write_bytes(path, blob.encode())


def manifest_checkpoint(entries: list[ManifestEntry], expected: str | None = None) -> str:
    """The single checkpoint all entries agree on (mixing is a config error)."""
    names = {e.checkpoint for e in entries}
    if not names:
        raise ConfigError("manifest has no entries")
    if len(names) > 1:
        raise ConfigError(f"manifest mixes checkpoints: {sorted(names)}")
    name = names.pop()
    if expected is not None and name != expected:
        raise ConfigError(f"manifest checkpoint {name!r} does not match {expected!r}")
    return name
