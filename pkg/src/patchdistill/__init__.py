"""patchdistill: distill a labeled image dataset by selecting, clustering,
and reassembling its most class-representative patches, scored with a
text-conditional diffusion backend used as a classifier rather than a
generator."""

__version__ = "0.1.0"

from .clustering import (
    ClusterConfig,
    DeterministicKMeans,
    allocate_quota,
    cluster_candidates,
    select_final_patches,
)
from .errors import BackendError, ConfigError, DistillError, InfeasibleError
from .mockworld import MockBackend, MockTeacher, MockWorldSpec
from .pipeline import DistillConfig, manifest_eval, run_distill, slice_manifest, slice_run
from .reconstruct import CropBox, SyntheticManifest, assemble_mosaic, crop_patch
from .remote import RemoteBackend, RemoteTeacher
from .scoring import (
    PatchWindow,
    ScoreConfig,
    class_posterior_multi,
    class_probability_binary,
    loss_diff_map,
    pool_patch_scores,
    representativeness,
    select_best_patch,
)
from .types import DrawSpec, FeatureVector, LatentMap, LossMap, PromptSpec

__all__ = [
    "BackendError",
    "ClusterConfig",
    "ConfigError",
    "CropBox",
    "DeterministicKMeans",
    "DistillConfig",
    "DistillError",
    "DrawSpec",
    "FeatureVector",
    "InfeasibleError",
    "LatentMap",
    "LossMap",
    "MockBackend",
    "MockTeacher",
    "MockWorldSpec",
    "PatchWindow",
    "PromptSpec",
    "RemoteBackend",
    "RemoteTeacher",
    "ScoreConfig",
    "SyntheticManifest",
    "allocate_quota",
    "assemble_mosaic",
    "class_posterior_multi",
    "class_probability_binary",
    "cluster_candidates",
    "crop_patch",
    "loss_diff_map",
    "manifest_eval",
    "pool_patch_scores",
    "representativeness",
    "run_distill",
    "select_best_patch",
    "select_final_patches",
    "slice_manifest",
    "slice_run",
]
