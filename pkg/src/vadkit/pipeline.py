"""End-to-end pipeline operations behind the service endpoints and the CLI.

Each ``run_*`` function takes plain JSON-safe arguments (paths, names, flags),
performs one pipeline stage, and returns a JSON-safe payload.  File outputs
are atomic and byte-deterministic for identical inputs.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from . import bank as bank_mod
from . import synth as synth_mod
from .backends import get_backend
from .channels import (VesselAnnotation, load_mask, save_mask, select_top,
                       snr_generic, snr_vessel)
from .config import CheckpointConfig, resolve_checkpoint, validate_config
from .errors import (ConfigError, DegenerateInputError, InsufficientDataError,
                     VadkitError)
from .fmap import atomic_write_bytes, write_fmap
from .manifest import ManifestEntry, load_manifest, manifest_checkpoint, save_manifest
from .metrics import LabeledScore, apply_threshold, compute_metrics, pr_curve
from .netpbm import read_pnm, write_pnm
from .pgs import build_geometry, coverage_stats, sample_descriptors
from .render import render_heatmap
from .roi import (augment_flips, extract_roi, featurize, flip_tags,
                  grid_anchor, load_precomputed, nominal_anchor_px)

_BANK_CACHE: dict[str, tuple[tuple[int, int], bank_mod.NormalityBank]] = {}


def _cached_bank(path) -> bank_mod.NormalityBank:
    p = Path(path).resolve()
    stat = p.stat() if p.is_file() else None
    key = str(p)
    if stat is not None:
        sig = (stat.st_mtime_ns, stat.st_size)
        hit = _BANK_CACHE.get(key)
        if hit is not None and hit[0] == sig:
            return hit[1]
    bank = bank_mod.load_bank(p)
    if stat is not None:
        _BANK_CACHE[key] = ((stat.st_mtime_ns, stat.st_size), bank)
    return bank


def _cfg_from_bank(bank: bank_mod.NormalityBank) -> CheckpointConfig:
    doc = bank.config
    return CheckpointConfig.from_json(doc.get("name", "unknown"), doc)


def _resolve(checkpoint: str | None, config: str | None, entries=None,
             backend: str | None = None) -> CheckpointConfig:
    name = checkpoint
    if entries is not None:
        name = manifest_checkpoint(entries, expected=checkpoint)
    if name is None:
        raise ConfigError("no checkpoint given and none derivable from a manifest")
    cfg = resolve_checkpoint(name, config)
    if backend is not None and backend != cfg.backend:
        cfg = validate_config(CheckpointConfig.from_json(name, {**cfg.to_json(), "backend": backend}))
    return cfg


def _entry_fmap(entry: ManifestEntry, base: Path, cfg: CheckpointConfig, backend):
    if entry.kind == "fmap":
        return load_precomputed(base / entry.path, backend, cfg.name)
    raw = read_pnm(base / entry.path)
    roi = extract_roi(raw, entry.anchor_px, cfg, source=entry.path)
    return featurize(roi, backend, checkpoint=cfg.name, source_size=raw.shape[:2])


def _flip_pixels(arr: np.ndarray, tag: str) -> np.ndarray:
    if tag in ("v", "vh"):
        arr = arr[::-1]
    if tag in ("h", "vh"):
        arr = arr[:, ::-1]
    return np.ascontiguousarray(arr)


# ------------------------------------------------------------------ synth ---

def run_synth(kind: str, out_dir: str, normal: int, anomalous: int, seed: int,
              checkpoint: str | None = None, raw_px: int = 320, roi_px: int = 256,
              anomaly_location: str = "near-anchor") -> dict:
    return synth_mod.gen_dataset(
        out_dir, kind, normal, anomalous, seed,
        checkpoint=checkpoint, raw_px=raw_px, roi_px=roi_px,
        anomaly_location=anomaly_location,
    )


# -------------------------------------------------------------------- roi ---

def run_roi(image: str, anchor_px, checkpoint: str, out: str,
            config: str | None = None, roi_px: int | None = None) -> dict:
    cfg = resolve_checkpoint(checkpoint, config)
    raw = read_pnm(image)
    roi = extract_roi(raw, anchor_px, cfg, roi_px=roi_px, source=image)
    write_pnm(roi.pixels, out)
    sidecar = {
        "anchor_px": list(roi.anchor_px),
        "applied_shift_px": list(roi.applied_shift_px),
        "source": roi.source,
        "checkpoint": cfg.name,
    }
    atomic_write_bytes(str(out) + ".json",
                       (json.dumps(sidecar, sort_keys=True, indent=2) + "\n").encode())
    return {"roi": str(out), **sidecar}


# -------------------------------------------------------------- featurize ---

def run_featurize(manifest: str, out_dir: str, checkpoint: str | None = None,
                  config: str | None = None, backend: str | None = None,
                  augment: bool = False) -> dict:
    entries, base = load_manifest(manifest)
    cfg = _resolve(checkpoint, config, entries, backend)
    be = get_backend(cfg.backend)
    out = Path(out_dir)
    (out / "fmaps").mkdir(parents=True, exist_ok=True)
    out_entries: list[ManifestEntry] = []
    for entry in entries:
        stem = Path(entry.path).stem
        if entry.kind == "fmap":
            if augment:
                raise ConfigError(
                    f"{entry.path}: precomputed feature maps cannot be flip-augmented"
                )
            fm = load_precomputed(base / entry.path, be, cfg.name)
            rel = f"fmaps/{stem}.fmap"
            write_fmap(fm, out / rel)
            out_entries.append(
                ManifestEntry(rel, "fmap", entry.label, cfg.name,
                              entry.anchor_px, entry.vessel_mask_path)
            )
            continue
        raw = read_pnm(base / entry.path)
        roi = extract_roi(raw, entry.anchor_px, cfg, source=entry.path)
        if augment and cfg.flips and roi.applied_shift_px != (0, 0):
            raise ConfigError(
                f"{entry.path}: ROI was border-clamped by {roi.applied_shift_px}; "
                "flip augmentation would break the shared sampling geometry"
            )
        mask_px = None
        if entry.vessel_mask_path is not None:
            mask_px = read_pnm(base / entry.vessel_mask_path)
        rois = augment_flips(roi, cfg.flips) if augment else [roi]
        tags = flip_tags(cfg.flips) if augment else [None]
        for tag, r in zip(tags, rois):
            suffix = f"__{tag}" if tag else ""
            fm = featurize(r, be, checkpoint=cfg.name, source_size=raw.shape[:2])
            rel = f"fmaps/{stem}{suffix}.fmap"
            write_fmap(fm, out / rel)
            mask_rel = None
            if mask_px is not None:
                (out / "masks").mkdir(exist_ok=True)
                mask_rel = f"masks/{stem}{suffix}.pgm"
                write_pnm(_flip_pixels(mask_px, tag or "orig"), out / mask_rel)
            out_entries.append(
                ManifestEntry(rel, "fmap", entry.label, cfg.name, entry.anchor_px, mask_rel)
            )
    out_manifest = out / "manifest.json"
    save_manifest(out_entries, out_manifest)
    return {
        "manifest": str(out_manifest),
        "count": len(out_entries),
        "backend": be.backend_id,
        "checkpoint": cfg.name,
        "augment": bool(augment),
    }


# -------------------------------------------------------- select-channels ---

def _normal_maps(entries, base, cfg, backend):
    normals = [e for e in entries if e.label == "normal"]
    maps = [_entry_fmap(e, base, cfg, backend) for e in normals]
    return normals, maps


def run_select_channels(manifest: str, out: str, checkpoint: str | None = None,
                        config: str | None = None, fraction: float | None = None,
                        bottom: bool = False) -> dict:
    entries, base = load_manifest(manifest)
    cfg = _resolve(checkpoint, config, entries)
    be = get_backend(cfg.backend)
    normals, maps = _normal_maps(entries, base, cfg, be)
    if len(maps) < 2:
        raise InsufficientDataError(
            f"channel selection needs K' >= 2 normal maps, manifest has {len(maps)}"
        )
    if cfg.snr_mode == "vessel":
        annotations = []
        for e in normals:
            if e.vessel_mask_path is None:
                raise ConfigError(
                    f"{e.path}: vessel-mode channel selection needs vessel_mask_path"
                )
            mask_px = read_pnm(base / e.vessel_mask_path)
            annotations.append(
                VesselAnnotation.from_mask(mask_px, be.input_px, be.patch_px,
                                           be.stride_px, be.grid)
            )
        scores = snr_vessel(maps, annotations)
    else:
        scores = snr_generic(maps)
    frac = cfg.channel_fraction if fraction is None else float(fraction)
    mask = select_top(scores, frac, bottom=bottom, mode=cfg.snr_mode,
                      source={"checkpoint": cfg.name, "k_samples": len(maps)})
    save_mask(mask, out)
    return {
        "mask": str(out),
        "mode": mask.mode,
        "fraction": mask.fraction,
        "bottom": bool(bottom),
        "kept": list(mask.kept),
        "k_samples": len(maps),
    }


# -------------------------------------------------------------------- fit ---

def run_fit(manifest: str, mask: str, out: str, checkpoint: str | None = None,
            config: str | None = None, epsilon: float | None = None) -> dict:
    entries, base = load_manifest(manifest)
    cfg = _resolve(checkpoint, config, entries)
    be = get_backend(cfg.backend)
    channel_mask = load_mask(mask)
    if channel_mask.n_raw != be.channels:
        raise ConfigError(
            f"channel mask covers {channel_mask.n_raw} channels, backend "
            f"{be.backend_id!r} has {be.channels}"
        )
    normals, maps = _normal_maps(entries, base, cfg, be)
    if len(maps) < 2:
        raise InsufficientDataError(
            f"normality fit needs K' >= 2 normal maps, manifest has {len(maps)}"
        )
    anchor = grid_anchor(nominal_anchor_px(cfg), cfg.roi_px, be)
    geometry = build_geometry(cfg.lam, cfg.a0, cfg.a1, anchor, *be.grid)
    from .fmap import select_channels as select
    sets = [sample_descriptors(select(m, channel_mask), geometry) for m in maps]
    eps = cfg.epsilon if epsilon is None else float(epsilon)
    nb = bank_mod.fit(sets, geometry, channel_mask, eps, config=cfg.to_json())
    bank_mod.save_bank(nb, out)
    return {
        "bank": str(out),
        "k_samples": len(maps),
        "n_locations": nb.n_locations,
        "c_sel": nb.c_sel,
        "epsilon": eps,
        "checkpoint": cfg.name,
    }


# ------------------------------------------------------------------ score ---

def _score_input(bank: bank_mod.NormalityBank, image: str | None, anchor_px,
                 fmap: str | None):
    from .fmap import select_channels as select
    cfg = _cfg_from_bank(bank)
    be = get_backend(cfg.backend)
    if (image is None) == (fmap is None):
        raise ConfigError("give exactly one input: an image or a feature map")
    roi = None
    if fmap is not None:
        fm = load_precomputed(fmap, be, cfg.name)
    else:
        raw = read_pnm(image)
        if anchor_px is None:
            sidecar = Path(str(image) + ".json")
            if not sidecar.is_file():
                raise ConfigError(f"{image}: no anchor given and no {sidecar.name} sidecar")
            anchor_px = tuple(json.loads(sidecar.read_text())["anchor_px"])
        roi = extract_roi(raw, anchor_px, cfg, source=str(image))
        fm = featurize(roi, be, checkpoint=cfg.name, source_size=raw.shape[:2])
    descriptors = sample_descriptors(select(fm, bank.mask), bank.geometry)
    return bank_mod.score(bank, descriptors), roi, cfg, be


def run_score(bank: str, image: str | None = None, anchor_px=None,
              fmap: str | None = None, heatmap: str | None = None,
              tau: float | None = None) -> dict:
    nb = _cached_bank(bank)
    result, roi, cfg, be = _score_input(nb, image, anchor_px, fmap)
    payload = {
        "score": result.score,
        "argmax": result.argmax,
        "n_locations": len(result.location_scores),
        "tau": nb.threshold,
        "checkpoint": cfg.name,
        "location_scores": [float(s) for s in result.location_scores],
    }
    if heatmap is not None:
        if roi is None:
            raise ConfigError("heatmap rendering needs an image input, not a feature map")
        marker_tau = tau if tau is not None else (nb.threshold or 0.0)
        payload["heatmap"] = render_heatmap(result, nb.geometry, roi, marker_tau,
                                            heatmap, be)
    return payload


def run_check(bank: str, image: str | None = None, anchor_px=None,
              fmap: str | None = None, tau: float | None = None,
              heatmap: str | None = None) -> dict:
    nb = _cached_bank(bank)
    threshold = tau if tau is not None else nb.threshold
    if threshold is None:
        raise ConfigError("bank stores no threshold; pass --tau or store one via eval")
    result, roi, cfg, be = _score_input(nb, image, anchor_px, fmap)
    payload = {
        "score": result.score,
        "tau": float(threshold),
        "anomalous": bool(result.score > threshold),
        "argmax": result.argmax,
        "checkpoint": cfg.name,
    }
    if heatmap is not None:
        if roi is None:
            raise ConfigError("heatmap rendering needs an image input, not a feature map")
        payload["heatmap"] = render_heatmap(result, nb.geometry, roi, float(threshold),
                                            heatmap, be)
    return payload


# ------------------------------------------------------------------- eval ---

def run_eval(bank: str, manifest: str, out: str | None = None,
             pr_csv: str | None = None, store_tau: bool = False) -> dict:
    nb = _cached_bank(bank)
    cfg = _cfg_from_bank(nb)
    be = get_backend(cfg.backend)
    entries, base = load_manifest(manifest)
    if not entries:
        raise DegenerateInputError("evaluation manifest is empty")
    manifest_checkpoint(entries, expected=cfg.name)
    from .fmap import select_channels as select
    labeled: list[LabeledScore] = []
    rows = []
    failures = []
    for entry in entries:
        if entry.label == "unlabeled":
            failures.append({"id": entry.path, "kind": "invalid-argument",
                             "message": "entry is unlabeled"})
            continue
        try:
            fm = _entry_fmap(entry, base, cfg, be)
            result = bank_mod.score(nb, sample_descriptors(select(fm, nb.mask), nb.geometry))
        except VadkitError as exc:
            failures.append({"id": entry.path, "kind": exc.kind, "message": str(exc)})
            continue
        labeled.append(LabeledScore(result.score, entry.label, entry.path))
        rows.append({"id": entry.path, "score": result.score, "label": entry.label})
    m = compute_metrics(labeled)
    tau_used = nb.threshold if nb.threshold is not None else m.tau_star
    for row in rows:
        row["verdict"] = "anomalous" if row["score"] > tau_used else "normal"
    report = {
        "metrics": m.to_json(),
        "tau_used": tau_used,
        "items": rows,
        "failures": failures,
    }
    if out is not None:
        atomic_write_bytes(out, (json.dumps(report, sort_keys=True, indent=2) + "\n").encode())
        report["report"] = str(out)
    if pr_csv is not None:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["threshold", "precision", "recall"])
        for pt in pr_curve(labeled):
            writer.writerow([repr(pt["threshold"]), repr(pt["precision"]), repr(pt["recall"])])
        atomic_write_bytes(pr_csv, buf.getvalue().encode())
        report["pr_csv"] = str(pr_csv)
    if store_tau:
        bank_mod.save_bank(bank_mod.set_threshold(nb, m.tau_star), bank)
        report["stored_tau"] = m.tau_star
    return report


# ---------------------------------------------------------- dump-geometry ---

def run_dump_geometry(checkpoint: str | None = None, config: str | None = None,
                      bank: str | None = None) -> dict:
    if bank is not None:
        nb = _cached_bank(bank)
        geometry = nb.geometry
        name = _cfg_from_bank(nb).name
    else:
        if checkpoint is None:
            raise ConfigError("dump-geometry needs --checkpoint or --bank")
        cfg = resolve_checkpoint(checkpoint, config)
        be = get_backend(cfg.backend)
        anchor = grid_anchor(nominal_anchor_px(cfg), cfg.roi_px, be)
        geometry = build_geometry(cfg.lam, cfg.a0, cfg.a1, anchor, *be.grid)
        name = cfg.name
    return {
        "checkpoint": name,
        "digest": geometry.digest(),
        "n_windows": geometry.n_windows,
        "coverage": coverage_stats(geometry),
        "geometry": geometry.to_json(),
    }
