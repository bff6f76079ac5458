"""Representativeness scoring and patch selection.

An image's representativeness is the Monte-Carlo expectation, over paired
noise draws, of the unconditional-minus-conditional denoising loss:

    rho = E_{eps,t}[ mean(L_null) - mean(L_label) ]

Larger rho means the class prompt explains the content better. The same
averaged difference map, pooled with a square window, scores every patch
offset; the best offset becomes the image's candidate patch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BackendError
from .types import Backend, DrawSpec, LatentMap, PromptSpec, stable_hash64

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class ScoreConfig:
    """Knobs for the Monte-Carlo loss-difference estimate."""

    t_min: float = 0.1
    t_max: float = 0.7
    n_draws: int = 10
    rng_seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        if not (0.0 < self.t_min < self.t_max < 1.0):
            raise ValueError(f"need 0 < t_min < t_max < 1, got [{self.t_min}, {self.t_max}]")
        if self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")


@dataclass(frozen=True)
class PatchWindow:
    """Square pooling window, in latent units."""

    size_latent: int
    stride_latent: int = 1

    def __post_init__(self):
        if self.size_latent < 1:
            raise ValueError("window size must be >= 1")
        if self.stride_latent < 1:
            raise ValueError("stride must be >= 1")

    def grid_shape(self, map_shape: tuple[int, int]) -> tuple[int, int]:
        h, w = map_shape
        if self.size_latent > h or self.size_latent > w:
            raise ValueError(f"window {self.size_latent} larger than map {map_shape}")
        return (
            (h - self.size_latent) // self.stride_latent + 1,
            (w - self.size_latent) // self.stride_latent + 1,
        )


@dataclass
class ScoreMap:
    """Pooled rho per window offset; entry (i, j) is the window at
    latent top-left (i * stride, j * stride)."""

    values: np.ndarray
    window: PatchWindow

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.size < 1:
            raise ValueError("score map must be a non-empty 2-D grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("score map contains non-finite values")


@dataclass(frozen=True)
class PatchCandidate:
    """A crop location with its representativeness."""

    source_id: str
    top_left_latent: tuple[int, int]
    window: PatchWindow
    rho: float
    pixel_box: tuple[int, int, int, int]  # (x, y, w, h) in source pixels


def make_draws(cfg: ScoreConfig, source_id: str) -> list[DrawSpec]:
    """The per-image draw stream, derived from (rng_seed, source_id).

    Stratified t values split [t_min, t_max] into n_draws equal bins with one
    uniform sample each; the plain-uniform stream is available via the config
    flag. Identical across Label and Null evaluations by construction.
    """
    ss = np.random.SeedSequence([cfg.rng_seed & _U64, stable_hash64("draws", source_id)])
    rng = np.random.default_rng(ss)
    n = cfg.n_draws
    if cfg.stratified:
        u = rng.uniform(0.0, 1.0, n)
        ts = cfg.t_min + (np.arange(n) + u) / n * (cfg.t_max - cfg.t_min)
    else:
        ts = rng.uniform(cfg.t_min, cfg.t_max, n)
    seeds = rng.integers(0, 2**63, size=n, dtype=np.int64)
    return [DrawSpec(t=float(t), noise_seed=int(s)) for t, s in zip(ts, seeds)]


def _paired_loss(
    backend: Backend, latent: LatentMap, prompt: PromptSpec, draw: DrawSpec, index: int
) -> np.ndarray:
    try:
        m = backend.loss_map(latent, prompt, draw)
    except BackendError as e:
        raise BackendError(
            f"backend loss_map failed at draw {index} "
            f"(source={latent.source_id!r}, prompt={prompt.render()!r}): {e}",
            context={"draw_index": index, "source_id": latent.source_id, **e.context},
        ) from e
    if m.data.shape != latent.shape:
        raise BackendError(
            f"loss map shape {m.data.shape} does not match latent {latent.shape}",
            context={"draw_index": index, "source_id": latent.source_id},
        )
    return m.data.astype(np.float64)


def loss_diff_map(
    latent: LatentMap, label: PromptSpec, cfg: ScoreConfig, backend: Backend
) -> np.ndarray:
    """Average of (L_null - L_label) over the image's draw stream, float64."""
    if label.is_null:
        raise ValueError("label prompt must not be the null prompt")
    draws = make_draws(cfg, latent.source_id)
    null = PromptSpec.null()
    acc = np.zeros(latent.shape, dtype=np.float64)
    for i, d in enumerate(draws):
        cond = _paired_loss(backend, latent, label, d, i)
        base = _paired_loss(backend, latent, null, d, i)
        acc += base - cond
    return acc / len(draws)


def representativeness(
    latent: LatentMap, label: PromptSpec, cfg: ScoreConfig, backend: Backend
) -> float:
    return float(loss_diff_map(latent, label, cfg, backend).mean())


def class_probability_binary(
    latent: LatentMap, label: PromptSpec, cfg: ScoreConfig, backend: Backend
) -> float:
    """Binary class probability, a sigmoid of rho over the same draw set."""
    rho = representativeness(latent, label, cfg, backend)
    return float(1.0 / (1.0 + np.exp(-rho)))


def class_posterior_multi(
    latent: LatentMap, labels: list[PromptSpec], cfg: ScoreConfig, backend: Backend
) -> np.ndarray:
    """Posterior over the given prompts: softmax of negated expected losses.

    All prompts are evaluated against the identical draw stream, so any
    constant map added to every prompt's loss cancels.
    """
    if len(labels) < 2:
        raise ValueError("posterior needs at least 2 prompts")
    draws = make_draws(cfg, latent.source_id)
    means = np.zeros(len(labels), dtype=np.float64)
    for j, prompt in enumerate(labels):
        total = 0.0
        for i, d in enumerate(draws):
            total += _paired_loss(backend, latent, prompt, d, i).mean()
        means[j] = total / len(draws)
    z = -means
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def pool_patch_scores(diff_map: np.ndarray, window: PatchWindow) -> ScoreMap:
    """Windowed arithmetic means of a loss-difference map."""
    dm = np.asarray(diff_map, dtype=np.float64)
    if dm.ndim != 2:
        raise ValueError("diff map must be 2-D")
    window.grid_shape(dm.shape)  # raises if the window does not fit
    s = window.size_latent
    view = np.lib.stride_tricks.sliding_window_view(dm, (s, s))
    view = view[:: window.stride_latent, :: window.stride_latent]
    return ScoreMap(values=view.mean(axis=(2, 3)), window=window)


def top_candidates(
    score_map: ScoreMap, source_id: str, downsample_factor: int = 1, k: int = 1
) -> list[PatchCandidate]:
    """Best k window offsets by rho; ties broken row-major, smallest offset first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    v = score_map.values
    flat = v.ravel()
    order = np.lexsort((np.arange(flat.size), -flat))  # by -rho, then row-major position
    out = []
    stride = score_map.window.stride_latent
    size = score_map.window.size_latent
    for idx in order[: min(k, flat.size)]:
        r, c = divmod(int(idx), v.shape[1])
        row_l, col_l = r * stride, c * stride
        out.append(
            PatchCandidate(
                source_id=source_id,
                top_left_latent=(row_l, col_l),
                window=score_map.window,
                rho=float(flat[idx]),
                pixel_box=(
                    col_l * downsample_factor,
                    row_l * downsample_factor,
                    size * downsample_factor,
                    size * downsample_factor,
                ),
            )
        )
    return out


def select_best_patch(
    score_map: ScoreMap, source_id: str, downsample_factor: int = 1
) -> PatchCandidate:
    """The argmax-rho candidate of a score map."""
    return top_candidates(score_map, source_id, downsample_factor, k=1)[0]
