"""Tensor payloads: base64 little-endian float32, row-major, plus shape."""

from __future__ import annotations

import base64

import numpy as np
from pydantic import BaseModel, field_validator


class TensorPayload(BaseModel):
    shape: list[int]
    dtype: str = "f32"
    data: str

    @field_validator("dtype")
    @classmethod
    def _dtype_fixed(cls, v):
        if v != "f32":
            raise ValueError("dtype must be 'f32'")
        return v


def to_payload(arr: np.ndarray) -> TensorPayload:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    return TensorPayload(
        shape=list(arr.shape),
        data=base64.b64encode(arr.tobytes()).decode("ascii"),
    )


def from_payload(payload: TensorPayload) -> np.ndarray:
    raw = base64.b64decode(payload.data)
    n = 1
    for s in payload.shape:
        n *= int(s)
    if len(raw) != 4 * n:
        raise ValueError(f"payload has {len(raw)} bytes, expected {4 * n} for shape {payload.shape}")
    return np.frombuffer(raw, dtype="<f4").reshape(payload.shape).copy()
