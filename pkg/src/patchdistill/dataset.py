"""Dataset catalog scanning, seeded subset sampling, and image loading."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError
from .reconstruct import resize_bilinear
from .types import stable_hash64

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp"}


@dataclass
class DatasetCatalog:
    """Per-class ordered image paths (relative to root) plus label texts."""

    root: Path
    classes: dict[str, list[str]]
    label_texts: dict[str, str] = field(default_factory=dict)

    @property
    def class_names(self) -> list[str]:
        return list(self.classes.keys())

    def label_text(self, class_name: str) -> str:
        return self.label_texts.get(class_name, class_name.replace("_", " "))


def scan_dataset(
    root: str | Path,
    class_names: list[str] | None = None,
    label_texts: dict[str, str] | None = None,
) -> DatasetCatalog:
    """Build a catalog from ``root/<class>/<image>`` layout, sorted throughout."""
    root = Path(root)
    if not root.is_dir():
        raise ConfigError(f"dataset root {root} is not a directory")
    names = class_names or sorted(p.name for p in root.iterdir() if p.is_dir())
    if not names:
        raise ConfigError(f"dataset root {root} has no class directories")
    classes: dict[str, list[str]] = {}
    for name in names:
        cdir = root / name
        if not cdir.is_dir():
            raise ConfigError(f"class directory {cdir} does not exist")
        files = sorted(
            str(Path(name) / p.name) for p in cdir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise ConfigError(f"class {name!r} has no images")
        classes[name] = files
    return DatasetCatalog(root=root, classes=classes, label_texts=dict(label_texts or {}))


def sample_subset(catalog: DatasetCatalog, k: int, seed: int) -> dict[str, list[str]]:
    """Uniform without-replacement sample of min(k, size) images per class.

    Deterministic per (seed, class name); a full-class sample keeps the
    original order, and partial samples keep the original relative order.
    """
    if k < 1:
        raise ConfigError("subset size must be >= 1")
    out: dict[str, list[str]] = {}
    for name, files in catalog.classes.items():
        if not files:
            raise ConfigError(f"class {name!r} is empty")
        if k >= len(files):
            out[name] = list(files)
            continue
        rng = np.random.default_rng(
            np.random.SeedSequence([seed & ((1 << 64) - 1), stable_hash64("subset", name)])
        )
        idx = np.sort(rng.choice(len(files), size=k, replace=False))
        out[name] = [files[i] for i in idx]
    return out


def resize_shortest_edge(image: np.ndarray, edge: int) -> np.ndarray:
    """Scale so the shortest edge equals ``edge``, preserving aspect ratio."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    if min(h, w) == edge:
        return img.copy()
    if h <= w:
        new_h, new_w = edge, max(1, int(round(w * edge / h)))
    else:
        new_h, new_w = max(1, int(round(h * edge / w))), edge
    return resize_bilinear(img, (new_h, new_w))


@lru_cache(maxsize=512)
def _load_resized(root: str, relpath: str, edge: int) -> np.ndarray:
    with Image.open(Path(root) / relpath) as im:
        arr = np.asarray(im.convert("RGB"))
    out = resize_shortest_edge(arr, edge)
    out.setflags(write=False)
    return out


class SourceStore:
    """Cached source-image loader applying the run's shortest-edge resize."""

    def __init__(self, root: str | Path, resize_edge: int):
        self.root = str(root)
        self.resize_edge = int(resize_edge)

    def load(self, relpath: str) -> np.ndarray:
        return _load_resized(self.root, relpath, self.resize_edge)
