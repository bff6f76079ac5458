"""Synthetic-image reconstruction and the distilled-set manifest.

Selected patches become either single-patch images or 2x2 mosaics of four
patches resized to half the output edge. The manifest is a JSON-lines file
(header line followed by one item per line) that references source images
and crop boxes, so the whole synthetic set can be regenerated without the
scoring backend.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from PIL import Image

from .clustering import TILES_PER_ITEM

MOSAIC_SIZE = 224
RESIZE_FILTER = "bilinear"

Loader = Callable[[str], np.ndarray]


@dataclass(frozen=True)
class CropBox:
    """Axis-aligned crop rectangle in source-image pixel coordinates."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError("crop box must have positive size")
        if self.x < 0 or self.y < 0:
            raise ValueError("crop box origin must be non-negative")

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, v) -> "CropBox":
        return cls(int(v[0]), int(v[1]), int(v[2]), int(v[3]))


def crop_patch(image: np.ndarray, box: CropBox) -> np.ndarray:
    """Exact pixel copy of the box; no resampling."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    if box.x + box.w > w or box.y + box.h > h:
        raise ValueError(f"crop box {box} exceeds image bounds {(h, w)}")
    return img[box.y : box.y + box.h, box.x : box.x + box.w].copy()


def resize_bilinear(image: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Bilinear resize to (height, width); a same-size call is a pure copy."""
    img = np.asarray(image)
    th, tw = size
    if img.shape[0] == th and img.shape[1] == tw:
        return img.copy()
    out = Image.fromarray(img).resize((tw, th), Image.BILINEAR)
    return np.asarray(out)


def assemble_mosaic(patches: list[np.ndarray], out_size: int = MOSAIC_SIZE) -> np.ndarray:
    """Place four patches row-major (TL, TR, BL, BR), each resized to half the edge."""
    if len(patches) != 4:
        raise ValueError(f"mosaic needs exactly 4 patches, got {len(patches)}")
    if out_size % 2 != 0:
        raise ValueError("mosaic size must be even")
    half = out_size // 2
    canvas = np.zeros((out_size, out_size, 3), dtype=np.uint8)
    slots = [(0, 0), (0, half), (half, 0), (half, half)]
    for patch, (r, c) in zip(patches, slots):
        tile = resize_bilinear(patch, (half, half))
        canvas[r : r + half, c : c + half] = tile
    return canvas


@dataclass(frozen=True)
class TileRef:
    """One source crop inside a synthetic item."""

    source_id: str
    source_path: str
    box: CropBox
    rho: float
    cluster: int
    intra_rank: int
    inter_rank: int

    def to_json(self) -> dict:
        return {
            "source_id": self.source_id,
            "source_path": self.source_path,
            "box": self.box.as_list(),
            "rho": self.rho,
            "cluster": self.cluster,
            "intra_rank": self.intra_rank,
            "inter_rank": self.inter_rank,
        }

    @classmethod
    def from_json(cls, d: dict) -> "TileRef":
        return cls(
            source_id=d["source_id"],
            source_path=d["source_path"],
            box=CropBox.from_list(d["box"]),
            rho=float(d["rho"]),
            cluster=int(d["cluster"]),
            intra_rank=int(d["intra_rank"]),
            inter_rank=int(d["inter_rank"]),
        )


@dataclass(frozen=True)
class SyntheticItem:
    class_name: str
    index: int
    path: str
    mode: str
    output_size: tuple[int, int]
    tiles: tuple[TileRef, ...]

    def __post_init__(self):
        want = TILES_PER_ITEM.get(self.mode)
        if want is None:
            raise ValueError(f"unknown mode {self.mode!r}")
        if len(self.tiles) != want:
            raise ValueError(f"{self.mode} item needs {want} tiles, got {len(self.tiles)}")

    def to_json(self) -> dict:
        return {
            "kind": "item",
            "class_name": self.class_name,
            "index": self.index,
            "path": self.path,
            "mode": self.mode,
            "output_size": list(self.output_size),
            "tiles": [t.to_json() for t in self.tiles],
        }

    @classmethod
    def from_json(cls, d: dict) -> "SyntheticItem":
        return cls(
            class_name=d["class_name"],
            index=int(d["index"]),
            path=d["path"],
            mode=d["mode"],
            output_size=(int(d["output_size"][0]), int(d["output_size"][1])),
            tiles=tuple(TileRef.from_json(t) for t in d["tiles"]),
        )


@dataclass
class ManifestHeader:
    config: dict
    mode: str
    counts: dict[str, int]
    class_names: list[str]
    seed: int
    config_hash: str = ""
    resize_filter: str = RESIZE_FILTER
    version: int = 1

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = config_digest(self.config)

    def to_json(self) -> dict:
        return {
            "kind": "header",
            "version": self.version,
            "config": self.config,
            "config_hash": self.config_hash,
            "mode": self.mode,
            "counts": self.counts,
            "class_names": self.class_names,
            "seed": self.seed,
            "resize_filter": self.resize_filter,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ManifestHeader":
        return cls(
            config=d["config"],
            mode=d["mode"],
            counts={k: int(v) for k, v in d["counts"].items()},
            class_names=list(d["class_names"]),
            seed=int(d["seed"]),
            config_hash=d["config_hash"],
            resize_filter=d.get("resize_filter", RESIZE_FILTER),
            version=int(d.get("version", 1)),
        )


def config_digest(config: dict) -> str:
    return hashlib.sha256(_dumps(config).encode("utf-8")).hexdigest()


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class SyntheticManifest:
    header: ManifestHeader
    items: list[SyntheticItem] = field(default_factory=list)

    def items_for(self, class_name: str) -> list[SyntheticItem]:
        return [it for it in self.items if it.class_name == class_name]

    def body_lines(self) -> list[str]:
        return [_dumps(it.to_json()) for it in self.items]

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        lines = [_dumps(self.header.to_json())] + self.body_lines()
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: str | Path) -> "SyntheticManifest":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines:
            raise ValueError(f"empty manifest: {path}")
        head = json.loads(lines[0])
        if head.get("kind") != "header":
            raise ValueError("manifest must start with a header line")
        items = []
        for ln in lines[1:]:
            if not ln.strip():
                continue
            d = json.loads(ln)
            if d.get("kind") != "item":
                raise ValueError("unexpected record kind in manifest body")
            items.append(SyntheticItem.from_json(d))
        return cls(header=ManifestHeader.from_json(head), items=items)


def render_item(item: SyntheticItem, load_source: Loader) -> np.ndarray:
    """Rebuild one synthetic image from its source references."""
    crops = [crop_patch(load_source(t.source_path), t.box) for t in item.tiles]
    if item.mode == "mosaic":
        return assemble_mosaic(crops, out_size=item.output_size[0])
    return crops[0]


def build_synthetic_set(
    tiles_by_class: dict[str, list[TileRef]],
    mode: str,
    out_dir: str | Path,
    load_source: Loader,
    header: ManifestHeader,
) -> SyntheticManifest:
    """Write one PNG per item plus ``manifest.jsonl``; returns the manifest.

    ``tiles_by_class`` must hold, per class, exactly IPC * tiles-per-item
    references in final emission order.
    """
    out_dir = Path(out_dir)
    per_item = TILES_PER_ITEM[mode]
    manifest = SyntheticManifest(header=header)
    for class_name in header.class_names:
        tiles = tiles_by_class[class_name]
        if len(tiles) % per_item != 0:
            raise ValueError(
                f"class {class_name!r}: {len(tiles)} tiles do not divide into items of {per_item}"
            )
        n_items = len(tiles) // per_item
        if header.counts.get(class_name) != n_items:
            raise ValueError(
                f"class {class_name!r}: {n_items} items but header declares "
                f"{header.counts.get(class_name)}"
            )
        (out_dir / class_name).mkdir(parents=True, exist_ok=True)
        for i in range(n_items):
            group = tiles[i * per_item : (i + 1) * per_item]
            if mode == "mosaic":
                # Tile placement is row-major by cluster rank, then rank
                # within the cluster; (inter, intra) is unique per candidate.
                group = sorted(group, key=lambda t: (t.inter_rank, t.intra_rank))
                size = (MOSAIC_SIZE, MOSAIC_SIZE)
            else:
                size = (group[0].box.h, group[0].box.w)
            group = tuple(group)
            item = SyntheticItem(
                class_name=class_name,
                index=i,
                path=f"{class_name}/{i:04d}.png",
                mode=mode,
                output_size=size,
                tiles=group,
            )
            img = render_item(item, load_source)
            Image.fromarray(img).save(out_dir / item.path)
            manifest.items.append(item)
    manifest.write(out_dir / "manifest.jsonl")
    return manifest


def regenerate_images(
    manifest: SyntheticManifest, out_dir: str | Path, load_source: Loader
) -> list[Path]:
    """Re-render every item from the manifest alone; returns written paths."""
    out_dir = Path(out_dir)
    written = []
    for item in manifest.items:
        target = out_dir / item.path
        target.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(render_item(item, load_source)).save(target)
        written.append(target)
    return written
