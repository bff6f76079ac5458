"""Domain types for the noise-prediction backend contract.

A backend exposes three deterministic operations: encoding an image into a
latent grid, computing a per-position prediction-error map for a prompt and
a noise draw, and extracting a feature vector for clustering. Both the
analytic mock backend and the remote sidecar client implement this contract.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from ._validation import as_float32_grid

LABEL_TEMPLATE = "An image of {}"
NULL_PROMPT_TEXT = "An image of ."


@dataclass(frozen=True)
class PromptSpec:
    """A text condition: either a class label or the unconditional null prompt."""

    label: str | None

    def __post_init__(self):
        if self.label is not None and not self.label.strip():
            raise ValueError("label text must be non-empty")

    @classmethod
    def for_label(cls, text: str) -> "PromptSpec":
        return cls(label=text)

    @classmethod
    def null(cls) -> "PromptSpec":
        return cls(label=None)

    @property
    def is_null(self) -> bool:
        return self.label is None

    def render(self) -> str:
        if self.label is None:
            return NULL_PROMPT_TEXT
        return LABEL_TEMPLATE.format(self.label)


@dataclass(frozen=True)
class DrawSpec:
    """One Monte-Carlo draw: a diffusion time fraction and a noise seed.

    The same DrawSpec must yield the identical noise realization across
    calls, so conditional and unconditional evaluations pair exactly.
    """

    t: float
    noise_seed: int

    def __post_init__(self):
        if not (0.0 < self.t < 1.0):
            raise ValueError(f"t must lie in (0, 1), got {self.t}")


@dataclass
class LatentMap:
    """A 2-D latent grid plus the pixel scale it was encoded at.

    ``origin`` is the (row, col) offset of this grid within its source
    image's latent frame; it stays (0, 0) for whole images and is set when
    a patch is cropped out, so position-aware backends (the mock) can stay
    aligned with their planted structure.
    """

    data: np.ndarray
    downsample_factor: int
    source_id: str
    origin: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.data = as_float32_grid(self.data, "latent data")
        if self.downsample_factor < 1:
            raise ValueError("downsample_factor must be >= 1")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def crop(self, row: int, col: int, size: int) -> "LatentMap":
        h, w = self.data.shape
        if row < 0 or col < 0 or row + size > h or col + size > w:
            raise ValueError(f"crop ({row},{col},{size}) exceeds latent shape {self.data.shape}")
        return LatentMap(
            data=self.data[row : row + size, col : col + size].copy(),
            downsample_factor=self.downsample_factor,
            source_id=self.source_id,
            origin=(self.origin[0] + row, self.origin[1] + col),
        )


@dataclass
class LossMap:
    """Per-position prediction error for one (prompt, draw) evaluation."""

    data: np.ndarray
    draw: DrawSpec
    prompt: PromptSpec

    def __post_init__(self):
        self.data = as_float32_grid(self.data, "loss data")


@dataclass
class FeatureVector:
    """Clustering embedding extracted at a fixed diffusion time."""

    values: np.ndarray
    feature_t: float
    layer_tag: str = ""

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("feature values must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature values contain non-finite entries")
        self.values = arr


@runtime_checkable
class Backend(Protocol):
    """The deterministic model-backend contract."""

    def encode(self, image: np.ndarray, source_id: str) -> LatentMap:
        """Encode an RGB uint8 image (H, W, 3) into a latent grid."""
        ...

    def loss_map(self, latent: LatentMap, prompt: PromptSpec, draw: DrawSpec) -> LossMap:
        """Per-position prediction error for the given prompt and draw."""
        ...

    def features(self, latent: LatentMap, prompt: PromptSpec, feature_t: float) -> FeatureVector:
        """Deterministic clustering embedding; feature_t passed through verbatim."""
        ...


@runtime_checkable
class Teacher(Protocol):
    """A classifier producing a probability vector for an RGB uint8 image."""

    class_names: list[str]

    def probabilities(self, image: np.ndarray) -> np.ndarray:
        ...


def stable_hash64(*parts: str | int) -> int:
    """Platform-stable 64-bit hash of strings/ints (process hash() is salted)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")
