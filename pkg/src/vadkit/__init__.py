"""vadkit: few-shot visual anomaly detection for anchor-aligned microscopy checkpoints.

Feature maps of anchor-aligned ROIs are compressed to their highest-SNR
channels, sampled at a granularity that coarsens with distance from the
anchor, and scored per location against few-shot Gaussian normality models
by Mahalanobis distance; the image verdict is the worst location.
"""

from .backends import BackendInfo, get_backend, list_backends, register_backend
from .bank import (NormalityBank, ScoreResult, fit, load_bank, save_bank, score,
                   set_threshold)
from .channels import (ChannelMask, VesselAnnotation, load_mask, save_mask,
                       select_top, snr_generic, snr_vessel)
from .config import CheckpointConfig, default_configs, load_configs, resolve_checkpoint
from .errors import (ConfigError, DegenerateInputError, FormatError,
                     InsufficientDataError, InvalidArgumentError,
                     InvalidInputError, IoError, VadkitError)
from .fmap import (FeatureMap, GridPoint, avg_pool, read_fmap, select_channels,
                   write_fmap)
from .metrics import LabeledScore, Metrics, apply_threshold, compute_metrics, pr_curve
from .pgs import (DescriptorSet, SamplingGeometry, Window, build_geometry,
                  chebyshev, coverage_stats, granularity_at, sample_descriptors)
from .roi import (RoiImage, anchor_to_grid, augment_flips, extract_roi, featurize,
                  flip_roi, grid_anchor, load_precomputed, nominal_anchor_px)
from .synth import AnomalySpec, SceneSpec, gen_dataset, gen_scene

__version__ = "0.1.0"
