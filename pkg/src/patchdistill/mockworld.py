"""Planted-signal mock world: an analytic backend with known class regions.

Every class owns a binary signature mask over a fixed grid. The mock loss
for a latent with activation ``a`` is

    L(i, j) = t + j0 * eta(seed, prompt, i, j) - [label c] * g_c * m_c(i, j) * a(i, j)

where ``eta`` is a seeded per-position value in [-1, 1] with mean zero over
seeds, drawn independently per prompt. With j0 = 0 the conditional/null
difference map equals g_c * m_c * a exactly, independent of t and seed, so
every downstream quantity has a closed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BackendError
from .types import DrawSpec, FeatureVector, LatentMap, LossMap, PromptSpec, stable_hash64

FEATURE_DIM = 8

_DEMO_COLORS = [
    (230, 40, 40),
    (60, 220, 60),
    (80, 80, 235),
    (225, 210, 50),
    (200, 70, 210),
    (60, 205, 205),
]


@dataclass
class PlantedClass:
    """One class of the mock world: a name, a signature mask, a color, a gain."""

    name: str
    mask: np.ndarray
    color: tuple[int, int, int] = (230, 40, 40)
    gain: float = 1.5

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=np.float32)
        if self.mask.ndim != 2:
            raise ValueError("mask must be a 2-D grid")
        # gain 0 is allowed: it degenerates to a signal-free class, which
        # several closed-form checks rely on.
        if self.gain < 0:
            raise ValueError("gain must be >= 0")
        self.color = tuple(int(c) for c in self.color)


def rect_mask(grid: tuple[int, int], row: int, col: int, h: int, w: int) -> np.ndarray:
    gh, gw = grid
    if row < 0 or col < 0 or row + h > gh or col + w > gw:
        raise ValueError("mask rectangle exceeds grid bounds")
    m = np.zeros(grid, dtype=np.float32)
    m[row : row + h, col : col + w] = 1.0
    return m


@dataclass
class MockWorldSpec:
    """The full deterministic world: classes, jitter amplitude, image synthesis knobs.

    ``n_distractors`` off-mask blobs per image carry other classes' colors,
    so random crops can pick up misleading signal while the planted mask
    stays the only region the scoring backend rewards.
    """

    classes: list[PlantedClass]
    jitter: float = 0.0
    grid: tuple[int, int] = (64, 64)
    images_per_class: int = 60
    n_styles: int = 4
    n_distractors: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.jitter < 0:
            raise ValueError("jitter amplitude must be >= 0")
        self.grid = (int(self.grid[0]), int(self.grid[1]))
        for c in self.classes:
            if c.mask.shape != self.grid:
                raise ValueError(
                    f"class {c.name!r} mask shape {c.mask.shape} does not match grid {self.grid}"
                )
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")

    @property
    def class_names(self) -> list[str]:
        return [c.name for c in self.classes]

    def class_by_name(self, name: str) -> PlantedClass | None:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    # ---------------------------------------------------------------- demo

    @classmethod
    def demo(
        cls,
        n_classes: int = 3,
        grid: tuple[int, int] = (64, 64),
        mask_size: int = 28,
        jitter: float = 0.0,
        images_per_class: int = 60,
        n_styles: int = 4,
        n_distractors: int = 0,
        seed: int = 0,
        gain: float = 1.5,
    ) -> "MockWorldSpec":
        """A small world with one rectangular planted region per class.

        Mask corners land on multiples of 4 so that stride-4 pooling always
        has a fully-inside window.
        """
        if n_classes > len(_DEMO_COLORS):
            raise ValueError(f"demo supports up to {len(_DEMO_COLORS)} classes")
        gh, gw = grid
        rng = np.random.default_rng(np.random.SeedSequence([seed, stable_hash64("demo-masks")]))
        classes = []
        for i in range(n_classes):
            max_r = (gh - mask_size) // 4
            max_c = (gw - mask_size) // 4
            r = 4 * int(rng.integers(0, max_r + 1))
            c = 4 * int(rng.integers(0, max_c + 1))
            classes.append(
                PlantedClass(
                    name=f"class{i}",
                    mask=rect_mask(grid, r, c, mask_size, mask_size),
                    color=_DEMO_COLORS[i],
                    gain=gain,
                )
            )
        return cls(
            classes=classes,
            jitter=jitter,
            grid=grid,
            images_per_class=images_per_class,
            n_styles=n_styles,
            n_distractors=n_distractors,
            seed=seed,
        )

    # ------------------------------------------------------------ image gen

    def style_amplitude(self, style: int) -> float:
        """Center of the style's activation band; bands are disjoint so that
        feature clustering recovers styles exactly."""
        s = style % max(1, self.n_styles)
        return 0.55 + 0.40 * (s + 1) / self.n_styles

    def class_image(self, name: str, index: int) -> np.ndarray:
        """Deterministic RGB uint8 image for (class, index).

        Background is dim gray noise; the class mask region carries the class
        color at one of ``n_styles`` well-separated intensity bands (style =
        index mod n_styles), with small per-image and per-pixel variation.
        """
        cls = self.class_by_name(name)
        if cls is None:
            raise KeyError(f"unknown class {name!r}")
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, stable_hash64("image", name, index)])
        )
        bg = rng.uniform(0.02, 0.12, self.grid)
        amp = self.style_amplitude(index) + rng.uniform(-0.02, 0.02)
        act = np.clip(amp + rng.uniform(-0.01, 0.01, self.grid), 0.0, 1.0)
        img = np.repeat((bg * 255.0)[:, :, None], 3, axis=2)
        self._paint_distractors(img, cls, rng)
        color = np.asarray(cls.color, dtype=np.float64)
        inside = cls.mask > 0
        img[inside] = act[inside][:, None] * color[None, :]
        return np.clip(np.round(img), 0, 255).astype(np.uint8)

    def _paint_distractors(self, img: np.ndarray, cls: PlantedClass, rng) -> None:
        # Blobs land fully outside the class's own mask; their colors cycle
        # over the other classes.
        if self.n_distractors < 1 or len(self.classes) < 2:
            return
        others = [c for c in self.classes if c.name != cls.name]
        gh, gw = self.grid
        placed = 0
        for attempt in range(50 * self.n_distractors):
            if placed >= self.n_distractors:
                break
            size = int(rng.integers(5, 9))
            r = int(rng.integers(0, gh - size + 1))
            c = int(rng.integers(0, gw - size + 1))
            if cls.mask[r : r + size, c : c + size].any():
                continue
            color = np.asarray(others[placed % len(others)].color, dtype=np.float64)
            amp = rng.uniform(0.5, 0.8)
            img[r : r + size, c : c + size] = amp * color[None, None, :]
            placed += 1

    def source_id(self, name: str, index: int) -> str:
        return f"{name}/{index:04d}.png"

    def materialize(self, root: str | Path) -> Path:
        """Write the world's images to ``root/<class>/<idx>.png`` and return root."""
        root = Path(root)
        for cls in self.classes:
            cdir = root / cls.name
            cdir.mkdir(parents=True, exist_ok=True)
            for i in range(self.images_per_class):
                Image.fromarray(self.class_image(cls.name, i)).save(cdir / f"{i:04d}.png")
        return root

    def test_batch(
        self, n_per_class: int, patch_size: int, seed: int = 0
    ) -> tuple[list[np.ndarray], list[str]]:
        """Held-out labeled crops centered on each class's mask region.

        Crops jitter around the mask center (clipped to the grid) and always
        contain planted signal. Image indices start past ``images_per_class``
        so the batch never overlaps the training pool.
        """
        gh, gw = self.grid
        if patch_size > gh or patch_size > gw:
            raise ValueError(f"patch_size {patch_size} exceeds the grid {self.grid}")
        rng = np.random.default_rng(np.random.SeedSequence([seed, stable_hash64("test-batch")]))
        images: list[np.ndarray] = []
        labels: list[str] = []
        for cls in self.classes:
            rows = np.where(cls.mask.any(axis=1))[0]
            cols = np.where(cls.mask.any(axis=0))[0]
            center_r = (int(rows.min()) + int(rows.max()) + 1) // 2
            center_c = (int(cols.min()) + int(cols.max()) + 1) // 2
            jitter = max(1, patch_size // 4)
            for k in range(n_per_class):
                img = self.class_image(cls.name, self.images_per_class + k)
                rr = center_r - patch_size // 2 + int(rng.integers(-jitter, jitter + 1))
                cc = center_c - patch_size // 2 + int(rng.integers(-jitter, jitter + 1))
                rr = min(max(rr, 0), gh - patch_size)
                cc = min(max(cc, 0), gw - patch_size)
                images.append(img[rr : rr + patch_size, cc : cc + patch_size].copy())
                labels.append(cls.name)
        return images, labels

    # ----------------------------------------------------------------- io

    def to_json(self) -> dict:
        return {
            "grid": list(self.grid),
            "jitter": self.jitter,
            "images_per_class": self.images_per_class,
            "n_styles": self.n_styles,
            "n_distractors": self.n_distractors,
            "seed": self.seed,
            "classes": [
                {
                    "name": c.name,
                    "color": list(c.color),
                    "gain": c.gain,
                    "mask_rows": ["".join("1" if v else "0" for v in row) for row in (c.mask > 0)],
                }
                for c in self.classes
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MockWorldSpec":
        grid = tuple(doc["grid"])
        classes = []
        for c in doc["classes"]:
            if "mask_rows" in c:
                mask = np.asarray(
                    [[1.0 if ch == "1" else 0.0 for ch in row] for row in c["mask_rows"]],
                    dtype=np.float32,
                )
            else:
                r, co, h, w = c["mask_rect"]
                mask = rect_mask(grid, r, co, h, w)
            classes.append(
                PlantedClass(
                    name=c["name"],
                    mask=mask,
                    color=tuple(c.get("color", (230, 40, 40))),
                    gain=float(c.get("gain", 1.5)),
                )
            )
        return cls(
            classes=classes,
            jitter=float(doc.get("jitter", 0.0)),
            grid=grid,
            images_per_class=int(doc.get("images_per_class", 60)),
            n_styles=int(doc.get("n_styles", 4)),
            n_distractors=int(doc.get("n_distractors", 0)),
            seed=int(doc.get("seed", 0)),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "MockWorldSpec":
        return cls.from_json(json.loads(Path(path).read_text()))


def _jitter_grid(noise_seed: int, prompt: PromptSpec, shape: tuple[int, int]) -> np.ndarray:
    """Per-prompt jitter in [-1, 1]; identical for equal (seed, prompt), mean -> 0 over seeds."""
    ss = np.random.SeedSequence(
        [noise_seed & ((1 << 64) - 1), stable_hash64("jitter", prompt.render())]
    )
    return np.random.default_rng(ss).uniform(-1.0, 1.0, shape)


def mock_loss_formula(
    world: MockWorldSpec, activation: np.ndarray, prompt: PromptSpec, draw: DrawSpec
) -> LossMap:
    """Closed-form mock loss on a full-grid activation; total on its domain."""
    a = np.asarray(activation, dtype=np.float64)
    if a.shape != world.grid:
        raise ValueError(f"activation shape {a.shape} does not match world grid {world.grid}")
    out = np.full(a.shape, draw.t, dtype=np.float64)
    if world.jitter > 0:
        out += world.jitter * _jitter_grid(draw.noise_seed, prompt, a.shape)
    if not prompt.is_null:
        cls = world.class_by_name(prompt.label)
        if cls is not None:
            out -= cls.gain * np.asarray(cls.mask, dtype=np.float64) * a
    return LossMap(data=out.astype(np.float32), draw=draw, prompt=prompt)


class MockBackend:
    """Backend over a MockWorldSpec; pure functions of the call arguments.

    Prompts are matched to planted classes by their label text, so mock runs
    should keep label texts equal to class names; unknown labels simply carry
    no planted signal (the loss reduces to drift plus jitter).
    """

    def __init__(self, world: MockWorldSpec):
        self.world = world

    @property
    def downsample_factor(self) -> int:
        return 1

    def encode(self, image: np.ndarray, source_id: str) -> LatentMap:
        img = np.asarray(image)
        if img.ndim != 3 or img.shape[2] != 3:
            raise BackendError(f"expected an RGB image, got shape {img.shape}")
        if img.shape[:2] != self.world.grid:
            raise BackendError(
                f"image shape {img.shape[:2]} does not match world grid {self.world.grid}",
                context={"source_id": source_id},
            )
        activation = img.astype(np.float32).mean(axis=2) / 255.0
        return LatentMap(data=activation, downsample_factor=1, source_id=source_id)

    def _mask_window(self, prompt: PromptSpec, latent: LatentMap) -> np.ndarray | None:
        if prompt.is_null:
            return None
        cls = self.world.class_by_name(prompt.label)
        if cls is None:
            return None
        r0, c0 = latent.origin
        h, w = latent.shape
        gh, gw = self.world.grid
        if r0 < 0 or c0 < 0 or r0 + h > gh or c0 + w > gw:
            raise BackendError(
                f"latent window ({r0},{c0})+{latent.shape} exceeds world grid {self.world.grid}",
                context={"source_id": latent.source_id},
            )
        return cls.mask[r0 : r0 + h, c0 : c0 + w] * cls.gain

    def loss_map(self, latent: LatentMap, prompt: PromptSpec, draw: DrawSpec) -> LossMap:
        a = latent.data.astype(np.float64)
        out = np.full(a.shape, draw.t, dtype=np.float64)
        if self.world.jitter > 0:
            out += self.world.jitter * _jitter_grid(draw.noise_seed, prompt, a.shape)
        gm = self._mask_window(prompt, latent)
        if gm is not None:
            out -= gm.astype(np.float64) * a
        return LossMap(data=out.astype(np.float32), draw=draw, prompt=prompt)

    def features(self, latent: LatentMap, prompt: PromptSpec, feature_t: float) -> FeatureVector:
        a = latent.data.astype(np.float64)
        h, w = a.shape
        gm = self._mask_window(prompt, latent)
        masked = float((gm.astype(np.float64) * a).mean()) if gm is not None else 0.0
        row_ramp = np.linspace(-1.0, 1.0, h)[:, None] if h > 1 else np.zeros((1, 1))
        col_ramp = np.linspace(-1.0, 1.0, w)[None, :] if w > 1 else np.zeros((1, 1))
        vec = np.array(
            [
                masked,
                a.mean(),
                a.std(),
                (a * row_ramp).mean(),
                (a * col_ramp).mean(),
                a[: h // 2 or 1].mean() - a[h // 2 :].mean() if h > 1 else 0.0,
                a[:, : w // 2 or 1].mean() - a[:, w // 2 :].mean() if w > 1 else 0.0,
                (a * a).mean(),
            ],
            dtype=np.float32,
        )
        return FeatureVector(values=vec, feature_t=feature_t, layer_tag="mock-moments")


@dataclass
class MockTeacher:
    """Closed-form color-rule classifier over the world's class colors."""

    world: MockWorldSpec
    sharpness: float = 40.0
    class_names: list[str] = field(init=False)

    def __post_init__(self):
        self.class_names = self.world.class_names
        dirs = []
        for c in self.world.classes:
            u = np.asarray(c.color, dtype=np.float64) / 255.0
            u = u - u.mean()
            n = np.linalg.norm(u)
            dirs.append(u / n if n > 1e-9 else u)
        self._dirs = np.stack(dirs)  # (C, 3)

    def scores(self, image: np.ndarray) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64) / 255.0
        if x.ndim != 3 or x.shape[2] != 3:
            raise ValueError(f"expected an RGB image, got shape {x.shape}")
        mean_rgb = x.reshape(-1, 3).mean(axis=0)
        return self._dirs @ mean_rgb

    def probabilities(self, image: np.ndarray) -> np.ndarray:
        z = self.sharpness * self.scores(image)
        z = z - z.max()
        e = np.exp(z)
        return e / e.sum()
