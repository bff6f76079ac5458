"""Builtin teacher: a linear color-direction classifier over mean RGB.

TEACHER_ID grammar: ``builtin-color`` for the default three classes, or
``builtin-color:name=r,g,b;name=r,g,b`` to configure them. Unknown ids mean
no teacher is available (503 on the logits route).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BUILTIN_TEACHER_ID = "builtin-color"
_DEFAULT_CLASSES = [("red", (230, 40, 40)), ("green", (60, 220, 60)), ("blue", (80, 80, 235))]
_SCALE = 15.0


@dataclass
class ColorTeacher:
    classes: list[tuple[str, tuple[int, int, int]]] = field(
        default_factory=lambda: list(_DEFAULT_CLASSES)
    )

    def __post_init__(self):
        dirs = []
        for _, color in self.classes:
            u = np.asarray(color, dtype=np.float64) / 255.0
            u = u - u.mean()
            n = np.linalg.norm(u)
            dirs.append(u / n if n > 1e-9 else u)
        self._dirs = np.stack(dirs)

    @property
    def class_names(self) -> list[str]:
        return [name for name, _ in self.classes]

    def logits(self, image: np.ndarray) -> np.ndarray:
        x = np.asarray(image, dtype=np.float64) / 255.0
        if x.ndim != 3 or x.shape[2] != 3:
            raise ValueError("teacher expects an RGB image")
        mean_rgb = x.reshape(-1, 3).mean(axis=0)
        return (_SCALE * (self._dirs @ mean_rgb)).astype(np.float32)


def load_teacher(teacher_id: str) -> ColorTeacher | None:
    if teacher_id == BUILTIN_TEACHER_ID:
        return ColorTeacher()
    if teacher_id.startswith(BUILTIN_TEACHER_ID + ":"):
        spec = teacher_id.split(":", 1)[1]
        classes = []
        for part in spec.split(";"):
            if not part.strip():
                continue
            name, rgb = part.split("=")
            r, g, b = (int(v) for v in rgb.split(","))
            classes.append((name.strip(), (r, g, b)))
        if not classes:
            return None
        return ColorTeacher(classes=classes)
    return None
