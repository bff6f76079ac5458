"""HTTP client for the inference sidecar's wire protocol.

Tensors travel as base64 little-endian float32, row-major, alongside their
shape. Transient transport failures are retried with exponential backoff;
protocol errors surface as BackendError immediately.
"""

from __future__ import annotations

import base64
import io
import time

import httpx
import numpy as np
from PIL import Image

from .errors import BackendError
from .types import DrawSpec, FeatureVector, LatentMap, LossMap, PromptSpec


def encode_tensor(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return {
        "shape": list(arr.shape),
        "dtype": "f32",
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_tensor(payload: dict) -> np.ndarray:
    if payload.get("dtype") != "f32":
        raise BackendError(f"unsupported tensor dtype {payload.get('dtype')!r}")
    shape = tuple(int(s) for s in payload["shape"])
    raw = base64.b64decode(payload["data"])
    n = int(np.prod(shape)) if shape else 0
    if len(raw) != 4 * n:
        raise BackendError(f"tensor payload has {len(raw)} bytes, expected {4 * n}")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image)).save(buf, format="PNG")
    return buf.getvalue()


class _SidecarSession:
    def __init__(self, endpoint: str, timeout: float = 60.0, retries: int = 3, backoff: float = 0.25):
        self.endpoint = endpoint.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self._client = httpx.Client(timeout=timeout)

    def post(self, path: str, body: dict) -> dict:
        url = f"{self.endpoint}{path}"
        last: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._client.post(url, json=body)
            except httpx.TransportError as e:
                last = e
                time.sleep(self.backoff * (2**attempt))
                continue
            if resp.status_code != 200:
                raise BackendError(
                    f"{path} returned {resp.status_code}: {resp.text[:200]}",
                    context={"status": resp.status_code, "path": path},
                )
            return resp.json()
        raise BackendError(
            f"{path} unreachable after {self.retries} attempts: {last}",
            context={"path": path},
        )

    def get(self, path: str) -> dict:
        url = f"{self.endpoint}{path}"
        try:
            resp = self._client.get(url)
        except httpx.TransportError as e:
            raise BackendError(f"{path} unreachable: {e}", context={"path": path}) from e
        if resp.status_code != 200:
            raise BackendError(f"{path} returned {resp.status_code}", context={"path": path})
        return resp.json()


class RemoteBackend:
    """Backend implementation speaking the sidecar protocol."""

    def __init__(self, endpoint: str, timeout: float = 60.0, retries: int = 3, backoff: float = 0.25):
        self._http = _SidecarSession(endpoint, timeout=timeout, retries=retries, backoff=backoff)
        self._downsample: int | None = None

    def health(self) -> dict:
        return self._http.get("/v1/health")

    @property
    def downsample_factor(self) -> int:
        if self._downsample is None:
            self._downsample = int(self.health()["downsample_factor"])
        return self._downsample

    def encode(self, image: np.ndarray, source_id: str) -> LatentMap:
        body = {"image": base64.b64encode(png_bytes(image)).decode("ascii")}
        out = self._http.post("/v1/encode", body)
        latent = decode_tensor(out["latent"])
        if latent.ndim != 2:
            raise BackendError(f"encode returned {latent.ndim}-D latent, expected 2-D")
        factor = int(out["downsample_factor"])
        self._downsample = factor
        return LatentMap(data=latent, downsample_factor=factor, source_id=source_id)

    def loss_map(self, latent: LatentMap, prompt: PromptSpec, draw: DrawSpec) -> LossMap:
        body = {
            "latent": encode_tensor(latent.data),
            "prompt": None if prompt.is_null else prompt.render(),
            "draws": [{"t": draw.t, "noise_seed": draw.noise_seed}],
        }
        out = self._http.post("/v1/loss_map", body)
        maps = decode_tensor(out["loss_maps"])
        if maps.ndim != 3 or maps.shape[0] != 1:
            raise BackendError(f"loss_map returned shape {maps.shape}, expected (1, H, W)")
        return LossMap(data=maps[0], draw=draw, prompt=prompt)

    def features(self, latent: LatentMap, prompt: PromptSpec, feature_t: float) -> FeatureVector:
        body = {
            "latents": [encode_tensor(latent.data)],
            "prompt": None if prompt.is_null else prompt.render(),
            "t": feature_t,
            "layer": "mid",
        }
        out = self._http.post("/v1/features", body)
        if len(out["features"]) != 1:
            raise BackendError("features endpoint returned an unexpected batch size")
        vec = decode_tensor(out["features"][0])
        return FeatureVector(values=vec.ravel(), feature_t=feature_t, layer_tag="mid")


class RemoteTeacher:
    """Teacher probabilities from the sidecar's logits endpoint."""

    def __init__(self, endpoint: str, timeout: float = 60.0, retries: int = 3):
        self._http = _SidecarSession(endpoint, timeout=timeout, retries=retries)
        self._class_names: list[str] | None = None

    @property
    def class_names(self) -> list[str]:
        if self._class_names is None:
            probe = self._http.get("/v1/health")
            names = probe.get("teacher_class_names")
            if not names:
                raise BackendError("sidecar does not expose a teacher")
            self._class_names = list(names)
        return self._class_names

    def probabilities(self, image: np.ndarray) -> np.ndarray:
        body = {"images": [base64.b64encode(png_bytes(image)).decode("ascii")]}
        out = self._http.post("/v1/teacher_logits", body)
        self._class_names = list(out["class_names"])
        logits = decode_tensor(out["logits"][0]).astype(np.float64).ravel()
        z = logits - logits.max()
        e = np.exp(z)
        return e / e.sum()
