"""Per-location Gaussian normality model with Mahalanobis scoring.

For each sampling window n the bank stores the mean mu_n of the K' training
descriptors and the lower-triangular Cholesky factor L_n of the regularized
covariance (1/(K'-1)) * sum (h - mu)(h - mu)^T + eps*I.  A query descriptor
scores s_n = ||L_n^{-1} (h_n - mu_n)|| via a triangular solve (no explicit
inverse); the image score is max_n s_n.

On disk (magic ``NBNK1\\n``): a little-endian uint32 header length, a JSON
header (config snapshot, geometry window list, channel mask, dims, epsilon,
K', optional threshold), then per location mu_n as C float64 followed by L_n
packed lower-triangular row-major, all little-endian.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .channels import ChannelMask
from .errors import FormatError, InsufficientDataError, InvalidArgumentError, IoError
from .fmap import atomic_write_bytes
from .pgs import DescriptorSet, SamplingGeometry

MAGIC = b"NBNK1\n"
_LEN = struct.Struct("<I")


@dataclasses.dataclass(frozen=True)
class ScoreResult:
    score: float                   # max over locations
    location_scores: np.ndarray    # (N,) float64
    argmax: int                    # lowest index achieving the max


@dataclasses.dataclass(frozen=True)
class NormalityBank:
    means: np.ndarray              # (N, C) float64
    factors: np.ndarray            # (N, C, C) float64, lower triangular
    geometry: SamplingGeometry
    mask: ChannelMask
    config: dict                   # checkpoint config snapshot
    epsilon: float
    k_samples: int
    threshold: float | None = None

    @property
    def n_locations(self) -> int:
        return self.means.shape[0]

    @property
    def c_sel(self) -> int:
        return self.means.shape[1]


def fit(sample_sets: list[DescriptorSet], geometry: SamplingGeometry,
        mask: ChannelMask, epsilon: float, config: dict | None = None) -> NormalityBank:
    """Fit per-location Gaussians from K' descriptor sets.

    All sets must come from ``geometry`` and share the selected channel count;
    epsilon > 0 guarantees the factorization succeeds.
    """
    if epsilon <= 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    k = len(sample_sets)
    if k < 2:
        raise InsufficientDataError(f"normality fit needs K' >= 2 descriptor sets, got {k}")
    digest = geometry.digest()
    for ds in sample_sets:
        if ds.geometry_digest != digest:
            raise InvalidArgumentError("descriptor set was sampled with a different geometry")
    c = sample_sets[0].descriptors.shape[1]
    if len(mask.kept) != c:
        raise InvalidArgumentError(
            f"descriptor dimension {c} does not match mask c_sel {len(mask.kept)}"
        )
    stack = np.stack([ds.descriptors for ds in sample_sets]).astype(np.float64)  # (K, N, C)
    if stack.shape[1] != geometry.n_windows:
        raise InvalidArgumentError("descriptor count does not match geometry windows")
    means = stack.mean(axis=0)
    diffs = stack - means
    cov = np.einsum("knc,knd->ncd", diffs, diffs) / (k - 1)
    cov += epsilon * np.eye(c)
    try:
        factors = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:  # eps*I should preclude this
        raise InvalidArgumentError(f"covariance factorization failed: {exc}") from exc
    if np.any(np.diagonal(factors, axis1=1, axis2=2) <= 0):
        raise InvalidArgumentError("covariance factor has a non-positive diagonal")
    return NormalityBank(
        means=means,
        factors=factors,
        geometry=geometry,
        mask=mask,
        config=dict(config or {}),
        epsilon=float(epsilon),
        k_samples=k,
    )


def score(bank: NormalityBank, query: DescriptorSet) -> ScoreResult:
    """Mahalanobis-score a query against the bank (max over locations)."""
    if query.geometry_digest != bank.geometry.digest():
        raise InvalidArgumentError("query was sampled with a different geometry than the bank")
    d = query.descriptors.astype(np.float64) - bank.means
    if d.shape[1] != bank.c_sel:
        raise InvalidArgumentError(
            f"query dimension {d.shape[1]} does not match bank c_sel {bank.c_sel}"
        )
    n = bank.n_locations
    s = np.empty(n, dtype=np.float64)
    factors = bank.factors
    for i in range(n):
        y = solve_triangular(factors[i], d[i], lower=True, check_finite=False)
        s[i] = np.sqrt(y @ y)
    arg = int(np.argmax(s))
    return ScoreResult(score=float(s[arg]), location_scores=s, argmax=arg)


def is_anomalous(bank: NormalityBank, image_score: float) -> bool:
    if bank.threshold is None:
        raise InvalidArgumentError("bank has no stored threshold")
    return image_score > bank.threshold


def set_threshold(bank: NormalityBank, tau: float) -> NormalityBank:
    if tau < 0:
        raise InvalidArgumentError(f"threshold must be non-negative, got {tau}")
    return dataclasses.replace(bank, threshold=float(tau))


def _header(bank: NormalityBank) -> dict:
    doc = {
        "version": 1,
        "config": bank.config,
        "geometry": bank.geometry.to_json(),
        "mask": bank.mask.to_json(),
        "n_locations": bank.n_locations,
        "c_sel": bank.c_sel,
        "epsilon": bank.epsilon,
        "k_samples": bank.k_samples,
    }
    if bank.threshold is not None:
        doc["threshold"] = bank.threshold
    return doc


def save_bank(bank: NormalityBank, path):
    header = json.dumps(_header(bank), sort_keys=True, separators=(",", ":")).encode()
    n, c = bank.n_locations, bank.c_sel
    tril = np.tril_indices(c)
    parts = [MAGIC, _LEN.pack(len(header)), header]
    for i in range(n):
        parts.append(bank.means[i].astype("<f8").tobytes())
        parts.append(bank.factors[i][tril].astype("<f8").tobytes())
    atomic_write_bytes(path, b"".join(parts))


def load_bank(path) -> NormalityBank:
    p = Path(path)
    if not p.is_file():
        raise IoError(f"no such bank file: {p}")
    blob = p.read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{p}: bad magic at byte offset 0")
    off = len(MAGIC)
    if len(blob) < off + _LEN.size:
        raise FormatError(f"{p}: truncated header length at byte offset {len(blob)}")
    (hlen,) = _LEN.unpack_from(blob, off)
    off += _LEN.size
    if len(blob) < off + hlen:
        raise FormatError(f"{p}: truncated header at byte offset {len(blob)}")
    try:
        doc = json.loads(blob[off : off + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{p}: malformed bank header ({exc})") from exc
    off += hlen
    try:
        geometry = SamplingGeometry.from_json(doc["geometry"])
        mask = ChannelMask.from_json(doc["mask"])
        n = int(doc["n_locations"])
        c = int(doc["c_sel"])
        epsilon = float(doc["epsilon"])
        k = int(doc["k_samples"])
        threshold = doc.get("threshold")
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{p}: malformed bank header ({exc})") from exc
    if geometry.n_windows != n:
        raise FormatError(f"{p}: geometry window count disagrees with n_locations")
    per_loc = c * 8 + (c * (c + 1) // 2) * 8
    if len(blob) - off != n * per_loc:
        raise FormatError(
            f"{p}: payload is {len(blob) - off} bytes, {n} locations of c_sel {c} "
            f"require {n * per_loc} (mismatch at byte offset {off})"
        )
    tril = np.tril_indices(c)
    means = np.empty((n, c), dtype=np.float64)
    factors = np.zeros((n, c, c), dtype=np.float64)
    for i in range(n):
        means[i] = np.frombuffer(blob, dtype="<f8", count=c, offset=off)
        off += c * 8
        packed = np.frombuffer(blob, dtype="<f8", count=c * (c + 1) // 2, offset=off)
        factors[i][tril] = packed
        off += packed.size * 8
    return NormalityBank(
        means=means,
        factors=factors,
        geometry=geometry,
        mask=mask,
        config=dict(doc.get("config", {})),
        epsilon=epsilon,
        k_samples=k,
        threshold=None if threshold is None else float(threshold),
    )
