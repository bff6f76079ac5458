"""Model bundles behind the HTTP surface.

The builtin bundle is a fully deterministic, dependency-free stand-in for a
latent diffusion checkpoint: a block-averaging encoder, a seeded analytic
noise-prediction rule, and a pooled-activation feature head. Every quantity
is a pure function of (inputs, seeds), so identical requests produce
identical bytes and golden fixtures stay valid.

Wiring a real checkpoint means registering another ModelBundle with the same
three methods; unknown MODEL_IDs leave the service in the "model not loaded"
state (503 on inference routes).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

T_TOTAL = 1000
DOWNSAMPLE = 8
FEATURE_DIM = 16
MIN_IMAGE_EDGE = DOWNSAMPLE

BUILTIN_MODEL_ID = "builtin-toy-v1"
NULL_PROMPT_KEY = "\x00<unconditional>"


def _hash64(*parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(str(p).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


def scheduler_step(t: float) -> int:
    """Normalized-or-raw time to an integer scheduler step: floor(t * T),
    clamped to the schedule; values beyond the range (e.g. 1.60) saturate."""
    return int(min(max(np.floor(t * T_TOTAL), 0), T_TOTAL - 1))


@dataclass
class ToyLatentDiffusion:
    model_id: str = BUILTIN_MODEL_ID

    def __post_init__(self):
        self._seed = _hash64("model", self.model_id)
        betas = np.linspace(1e-4, 0.02, T_TOTAL)
        self._alpha_bar = np.cumprod(1.0 - betas)

    # ------------------------------------------------------------- encoder

    def encode(self, image: np.ndarray) -> np.ndarray:
        """Sampling-free latent (the posterior mean of a toy encoder)."""
        img = np.asarray(image, dtype=np.float64)
        if img.ndim == 3:
            img = img.mean(axis=2)
        h, w = img.shape
        if h < MIN_IMAGE_EDGE or w < MIN_IMAGE_EDGE:
            raise ValueError(f"image {h}x{w} smaller than {MIN_IMAGE_EDGE}px minimum edge")
        hh, ww = h // DOWNSAMPLE, w // DOWNSAMPLE
        img = img[: hh * DOWNSAMPLE, : ww * DOWNSAMPLE] / 255.0
        blocks = img.reshape(hh, DOWNSAMPLE, ww, DOWNSAMPLE).mean(axis=(1, 3))
        z = 2.0 * (blocks - 0.5)
        return (z + 0.1 * np.sin(3.0 * z)).astype(np.float32)

    # ------------------------------------------------------------- prompts

    def _prompt_params(self, prompt: str | None) -> tuple[float, float, np.ndarray]:
        key = NULL_PROMPT_KEY if prompt is None else prompt
        rng = np.random.default_rng(np.random.SeedSequence([self._seed, _hash64("prompt", key)]))
        gain = float(rng.uniform(0.5, 1.5))
        bias = float(rng.uniform(-0.5, 0.5))
        mix = rng.standard_normal(4)
        return gain, bias, mix

    def _pattern(self, shape: tuple[int, int]) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence([self._seed, _hash64("pattern", shape[0], shape[1])])
        )
        return rng.standard_normal(shape)

    def _noise(self, seed: int, shape: tuple[int, int]) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence([seed & ((1 << 64) - 1), _hash64("draw-noise")])
        )
        return rng.standard_normal(shape)

    def _predict_noise(self, noisy: np.ndarray, step: int, prompt: str | None) -> np.ndarray:
        gain, bias, _ = self._prompt_params(prompt)
        damp = 1.0 - step / (2 * T_TOTAL)
        return np.tanh(gain * damp * noisy + bias * self._pattern(noisy.shape))

    # ----------------------------------------------------------- inference

    def loss_map(self, latent: np.ndarray, prompt: str | None, t: float, noise_seed: int) -> tuple[np.ndarray, int]:
        """Per-position squared prediction error; noise is seeded per draw and
        shared across prompts, so Label/Null calls pair exactly."""
        z = np.asarray(latent, dtype=np.float64)
        step = scheduler_step(t)
        ab = self._alpha_bar[step]
        eps = self._noise(noise_seed, z.shape)
        noisy = np.sqrt(ab) * z + (1.0 - np.sqrt(ab)) * eps
        pred = self._predict_noise(noisy, step, prompt)
        return ((pred - eps) ** 2).astype(np.float32), step

    def features(self, latent: np.ndarray, prompt: str | None, t: float, layer: str) -> tuple[np.ndarray, int]:
        """Pooled intermediate activations at the mapped step, projected to a
        fixed dimension."""
        z = np.asarray(latent, dtype=np.float64)
        step = scheduler_step(t)
        ab = self._alpha_bar[step]
        gain, bias, _ = self._prompt_params(prompt)
        act = np.tanh(gain * np.sqrt(ab) * z + bias * self._pattern(z.shape))
        h, w = act.shape
        stats = np.array(
            [
                act.mean(),
                act.std(),
                act[: max(1, h // 2)].mean(),
                act[h // 2 :].mean() if h > 1 else act.mean(),
                act[:, : max(1, w // 2)].mean(),
                act[:, w // 2 :].mean() if w > 1 else act.mean(),
                (act * np.linspace(-1, 1, h)[:, None]).mean(),
                (act * np.linspace(-1, 1, w)[None, :]).mean(),
            ]
        )
        rng = np.random.default_rng(
            np.random.SeedSequence([self._seed, _hash64("proj", layer)])
        )
        proj = rng.standard_normal((FEATURE_DIM, stats.size)) / np.sqrt(stats.size)
        return (proj @ stats).astype(np.float32), step


def load_model(model_id: str) -> ToyLatentDiffusion | None:
    """Resolve MODEL_ID to a bundle; unknown ids mean 'model not loaded'."""
    if model_id.startswith("builtin-toy"):
        return ToyLatentDiffusion(model_id=model_id)
    return None
