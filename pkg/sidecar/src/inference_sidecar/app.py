"""The HTTP surface: encode, loss_map, features, teacher_logits, health."""

from __future__ import annotations

import base64
import io
import os

import numpy as np
from fastapi import FastAPI, HTTPException
from PIL import Image
from pydantic import BaseModel

from .model import DOWNSAMPLE, T_TOTAL, BUILTIN_MODEL_ID, load_model
from .teacher import BUILTIN_TEACHER_ID, load_teacher
from .wire import TensorPayload, from_payload, to_payload


class EncodeRequest(BaseModel):
    image: str  # base64 PNG


class DrawBody(BaseModel):
    t: float
    noise_seed: int


class LossMapRequest(BaseModel):
    latent: TensorPayload
    prompt: str | None = None
    draws: list[DrawBody]


class FeaturesRequest(BaseModel):
    latents: list[TensorPayload]
    prompt: str | None = None
    t: float
    layer: str = "mid"


class TeacherRequest(BaseModel):
    images: list[str]


def _decode_image(b64: str) -> np.ndarray:
    try:
        raw = base64.b64decode(b64, validate=True)
        with Image.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("RGB"))
    except Exception as e:
        raise HTTPException(status_code=400, detail=f"undecodable image: {e}") from e


def create_app(model_id: str | None = None, teacher_id: str | None = None) -> FastAPI:
    model_id = model_id or os.environ.get("MODEL_ID", BUILTIN_MODEL_ID)
    teacher_id = teacher_id or os.environ.get("TEACHER_ID", BUILTIN_TEACHER_ID)
    model = load_model(model_id)
    teacher = load_teacher(teacher_id)
    app = FastAPI(title="inference-sidecar")

    def require_model():
        if model is None:
            raise HTTPException(status_code=503, detail=f"model {model_id!r} is not loaded")
        return model

    def decode_latent(payload: TensorPayload) -> np.ndarray:
        try:
            latent = from_payload(payload)
        except ValueError as e:
            raise HTTPException(status_code=422, detail=str(e)) from e
        if latent.ndim != 2 or latent.size == 0:
            raise HTTPException(status_code=422, detail="latent must be a non-empty 2-D tensor")
        if not np.all(np.isfinite(latent)):
            raise HTTPException(status_code=422, detail="latent contains non-finite values")
        return latent

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok" if model is not None else "model_not_loaded",
            "model_id": model_id,
            "teacher_id": teacher_id,
            "downsample_factor": DOWNSAMPLE,
            "T_total": T_TOTAL,
            "teacher_class_names": teacher.class_names if teacher is not None else None,
        }

    @app.post("/v1/encode")
    def encode(req: EncodeRequest):
        m = require_model()
        img = _decode_image(req.image)
        try:
            latent = m.encode(img)
        except ValueError as e:
            raise HTTPException(status_code=400, detail=str(e)) from e
        return {
            "latent": to_payload(latent).model_dump(),
            "downsample_factor": DOWNSAMPLE,
        }

    @app.post("/v1/loss_map")
    def loss_map(req: LossMapRequest):
        m = require_model()
        latent = decode_latent(req.latent)
        if not req.draws:
            raise HTTPException(status_code=422, detail="at least one draw is required")
        maps, steps = [], []
        for d in req.draws:
            if not (0.0 < d.t < 1.0):
                raise HTTPException(status_code=422, detail=f"draw t={d.t} outside (0, 1)")
            out, step = m.loss_map(latent, req.prompt, d.t, d.noise_seed)
            maps.append(out)
            steps.append(step)
        return {
            "loss_maps": to_payload(np.stack(maps)).model_dump(),
            "scheduler_steps": steps,
            "T_total": T_TOTAL,
        }

    @app.post("/v1/features")
    def features(req: FeaturesRequest):
        m = require_model()
        outs = []
        step_used = None
        for payload in req.latents:
            latent = decode_latent(payload)
            vec, step_used = m.features(latent, req.prompt, req.t, req.layer)
            outs.append(to_payload(vec).model_dump())
        return {
            "features": outs,
            "requested_t": req.t,
            "scheduler_step": step_used,
            "T_total": T_TOTAL,
        }

    @app.post("/v1/teacher_logits")
    def teacher_logits(req: TeacherRequest):
        if teacher is None:
            raise HTTPException(status_code=503, detail=f"teacher {teacher_id!r} is not loaded")
        logits = []
        for b64 in req.images:
            img = _decode_image(b64)
            logits.append(to_payload(teacher.logits(img)).model_dump())
        return {"logits": logits, "class_names": teacher.class_names}

    return app
