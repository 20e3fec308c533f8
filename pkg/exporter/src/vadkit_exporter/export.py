"""Dense DINOv2 patch-feature export at stride 7.

The ViT consumes 14px patches; running its patch projection at stride 7
yields overlapping patches and a 35 x 35 token grid for a 252 x 252 input.
The pretrained position encodings are bicubically interpolated to that grid,
the encoder runs unchanged, and the final-block patch tokens (after the
model's layernorm) are written as one FMAP tensor per image.

Feature source: final-block patch tokens; recorded in the sidecar metadata.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .fmapio import read_fmap, write_fmap

DEFAULT_MODEL = "facebook/dinov2-small"
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class ExportError(RuntimeError):
    pass


@dataclasses.dataclass
class ExportJob:
    inputs: list[str]
    out_dir: str
    model: str = DEFAULT_MODEL
    resize: int = 252
    stride: int = 7
    expected_grid: int = 35
    expected_channels: int | None = None   # None: whatever the backbone emits
    untrained: bool = False                # seeded random init, no download
    seed: int = 0


def load_backbone(model_id: str = DEFAULT_MODEL, untrained: bool = False, seed: int = 0):
    """Load the ViT; ``untrained`` builds the architecture with a seeded init
    so the exporter stays runnable (and deterministic) without weight access.
    """
    from transformers import Dinov2Config, Dinov2Model

    if untrained:
        torch.manual_seed(seed)
        config = Dinov2Config(
            hidden_size=32,
            num_hidden_layers=2,
            num_attention_heads=2,
            intermediate_size=128,
            patch_size=14,
            image_size=518,
        )
        model = Dinov2Model(config)
    else:
        try:
            model = Dinov2Model.from_pretrained(model_id)
        except Exception as exc:
            raise ExportError(
                f"could not load pretrained backbone {model_id!r}: {exc}"
            ) from exc
    model.eval()
    return model


def _preprocess(path, resize: int) -> torch.Tensor:
    img = Image.open(path).convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    t = torch.from_numpy(arr).permute(2, 0, 1)[None]
    if t.shape[-2:] != (resize, resize):
        t = torch.nn.functional.interpolate(
            t, size=(resize, resize), mode="bilinear", align_corners=True
        )
    mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
    return (t - mean) / std


def _interpolated_positions(model, grid: int) -> torch.Tensor:
    pos = model.embeddings.position_embeddings          # (1, 1 + g0*g0, C)
    cls_pos = pos[:, :1]
    patch_pos = pos[:, 1:]
    g0 = int(round(patch_pos.shape[1] ** 0.5))
    dim = patch_pos.shape[-1]
    patch_pos = patch_pos.reshape(1, g0, g0, dim).permute(0, 3, 1, 2)
    patch_pos = torch.nn.functional.interpolate(
        patch_pos.to(torch.float32), size=(grid, grid), mode="bicubic",
        align_corners=False,
    ).to(pos.dtype)
    patch_pos = patch_pos.permute(0, 2, 3, 1).reshape(1, grid * grid, dim)
    return torch.cat([cls_pos, patch_pos], dim=1)


@torch.inference_mode()
def dense_features(model, pixels: torch.Tensor, stride: int = 7) -> np.ndarray:
    """Patch tokens on the overlapping stride grid, (H, W, C) float32."""
    proj = model.embeddings.patch_embeddings.projection
    old_stride = proj.stride
    proj.stride = (stride, stride)
    try:
        patches = proj(pixels)                           # (1, C, gh, gw)
    finally:
        proj.stride = old_stride
    _, dim, gh, gw = patches.shape
    if gh != gw:
        raise ExportError(f"non-square token grid {gh}x{gw}")
    tokens = patches.flatten(2).transpose(1, 2)          # (1, gh*gw, C)
    cls = model.embeddings.cls_token.expand(tokens.shape[0], -1, -1)
    hidden = torch.cat([cls, tokens], dim=1) + _interpolated_positions(model, gh)
    out = model.encoder(hidden).last_hidden_state
    out = model.layernorm(out)
    grid = out[0, 1:, :].reshape(gh, gw, dim)
    return grid.to(torch.float32).cpu().numpy()


def export(job: ExportJob) -> list[dict]:
    """Export every input to an FMAP file; returns one record per image."""
    torch.set_num_threads(max(torch.get_num_threads(), 1))
    model = load_backbone(job.model, untrained=job.untrained, seed=job.seed)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for src in job.inputs:
        pixels = _preprocess(src, job.resize)
        feats = dense_features(model, pixels, stride=job.stride)
        h, w, c = feats.shape
        if (h, w) != (job.expected_grid, job.expected_grid):
            raise ExportError(
                f"{src}: token grid {h}x{w}, expected "
                f"{job.expected_grid}x{job.expected_grid}"
            )
        if job.expected_channels is not None and c != job.expected_channels:
            raise ExportError(
                f"{src}: {c} channels, expected {job.expected_channels}"
            )
        if not np.all(np.isfinite(feats)):
            raise ExportError(f"{src}: backbone produced non-finite features")
        dst = out_dir / (Path(src).stem + ".fmap")
        meta = {
            "model": job.model if not job.untrained else f"{job.model} (untrained)",
            "untrained": job.untrained,
            "source": str(src),
            "resize_px": job.resize,
            "patch_px": 14,
            "stride_px": job.stride,
            "feature_source": "final-block patch tokens (post layernorm)",
            "normalization": {"mean": list(IMAGENET_MEAN), "std": list(IMAGENET_STD)},
        }
        write_fmap(feats, dst, meta=meta)
        records.append({"source": str(src), "fmap": str(dst),
                        "shape": [h, w, c]})
    return records


def verify(path, height: int, width: int, channels: int | None = None) -> dict:
    """Validate one FMAP file against expected dims and finiteness."""
    try:
        arr = read_fmap(path)
    except (OSError, ValueError) as exc:
        return {"ok": False, "path": str(path), "reason": str(exc)}
    problems = []
    if arr.shape[0] != height or arr.shape[1] != width:
        problems.append(f"grid is {arr.shape[0]}x{arr.shape[1]}, expected {height}x{width}")
    if channels is not None and arr.shape[2] != channels:
        problems.append(f"{arr.shape[2]} channels, expected {channels}")
    if not np.all(np.isfinite(arr)):
        problems.append("payload contains non-finite values")
    if problems:
        return {"ok": False, "path": str(path), "reason": "; ".join(problems)}
    return {"ok": True, "path": str(path), "shape": list(arr.shape)}
