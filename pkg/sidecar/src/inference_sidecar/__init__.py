"""HTTP sidecar exposing deterministic encode / loss-map / feature / teacher
endpoints over base64 float32 tensor payloads."""

from .app import create_app
from .model import DOWNSAMPLE, T_TOTAL, ToyLatentDiffusion, load_model, scheduler_step
from .teacher import ColorTeacher, load_teacher
from .wire import TensorPayload, from_payload, to_payload

__version__ = "0.1.0"

__all__ = [
    "ColorTeacher",
    "DOWNSAMPLE",
    "T_TOTAL",
    "TensorPayload",
    "ToyLatentDiffusion",
    "create_app",
    "from_payload",
    "load_model",
    "load_teacher",
    "scheduler_step",
    "to_payload",
]
