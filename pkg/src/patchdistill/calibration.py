"""Soft-label generation and desk-scale student training on the KL objective.

The student is a softmax-linear model over flattened low-resolution pixels;
it exists to verify the label-calibration mechanics, not to reach benchmark
accuracy. Soft labels are stored as raw little-endian float32 records in
manifest order, with a JSON side-file naming the class order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ._validation import check_finite_2d, check_simplex
from .errors import BackendError, DistillError
from .reconstruct import Loader, SyntheticManifest, render_item, resize_bilinear
from .types import Teacher

_EPS = 1e-12


class TrainingDiverged(DistillError):
    """Raised when the training loss turns non-finite."""

    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


def kl_divergence(teacher, student) -> float:
    """Kullback-Leibler divergence sum(t * log(t / s)), with 0 * log 0 = 0."""
    t = check_simplex(teacher, "teacher")
    s = check_simplex(student, "student")
    if t.shape != s.shape:
        raise ValueError("teacher and student must have the same length")
    s = np.clip(s, _EPS, None)
    terms = np.where(t > 0, t * (np.log(np.clip(t, _EPS, None)) - np.log(s)), 0.0)
    return float(terms.sum())


# ----------------------------------------------------------- soft label io


def write_soft_labels(
    path_base: str | Path, probs: np.ndarray, class_names: list[str]
) -> tuple[Path, Path]:
    """Write ``<base>.bin`` (LE float32, C per record) and ``<base>.json``."""
    probs = np.asarray(probs, dtype=np.float32)
    if probs.ndim != 2 or probs.shape[1] != len(class_names):
        raise ValueError("probs must be (n_records, n_classes)")
    base = Path(path_base)
    bin_path = base.with_suffix(".bin")
    meta_path = base.with_suffix(".json")
    bin_path.write_bytes(probs.astype("<f4").tobytes(order="C"))
    meta_path.write_text(
        json.dumps(
            {
                "num_classes": len(class_names),
                "class_names": list(class_names),
                "count": int(probs.shape[0]),
                "dtype": "f32-le",
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        + "\n"
    )
    return bin_path, meta_path


def read_soft_labels(path_base: str | Path) -> tuple[np.ndarray, list[str]]:
    base = Path(path_base)
    meta = json.loads(base.with_suffix(".json").read_text())
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f4")
    c = int(meta["num_classes"])
    if raw.size != c * int(meta["count"]):
        raise ValueError("soft-label payload size disagrees with its side file")
    return raw.reshape(-1, c).copy(), list(meta["class_names"])


def generate_soft_labels(
    manifest: SyntheticManifest, teacher: Teacher, load_source: Loader
) -> np.ndarray:
    """One teacher probability vector per synthetic item, in manifest order."""
    out = np.zeros((len(manifest.items), len(teacher.class_names)), dtype=np.float32)
    for i, item in enumerate(manifest.items):
        img = render_item(item, load_source)
        try:
            p = np.asarray(teacher.probabilities(img), dtype=np.float64)
        except Exception as e:  # teacher backends may raise transport errors
            raise BackendError(f"teacher failed on item {item.path!r}: {e}") from e
        out[i] = check_simplex(p, f"teacher output for {item.path}")
    return out


# ------------------------------------------------------------- the student


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 0.5
    batch_size: int = 32
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


def softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def kl_batch_loss_and_grads(
    weights: np.ndarray, bias: np.ndarray, X: np.ndarray, T: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean KL(T || softmax(X W^T + b)) over the batch plus its gradients."""
    S = softmax_rows(X @ weights.T + bias[None, :])
    Sc = np.clip(S, _EPS, None)
    terms = np.where(T > 0, T * (np.log(np.clip(T, _EPS, None)) - np.log(Sc)), 0.0)
    loss = float(terms.sum(axis=1).mean())
    diff = (S - T) / X.shape[0]
    return loss, diff.T @ X, diff.sum(axis=0)


class SoftmaxLinearStudent(BaseEstimator, ClassifierMixin):
    """Minibatch gradient descent on the teacher-student KL objective.

    ``fit`` takes soft targets (one probability row per sample); training is
    deterministic given ``random_state``. The per-epoch mean batch loss lands
    in ``loss_curve_``.
    """

    def __init__(self, epochs=30, lr=0.5, batch_size=32, random_state=0):
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, T):
        X = check_finite_2d(X, "X")
        T = check_finite_2d(T, "T")
        if X.shape[0] != T.shape[0]:
            raise ValueError("X and T must have matching row counts")
        for row in T:
            check_simplex(row, "target row")
        n, d = X.shape
        c = T.shape[1]
        rng = np.random.default_rng(np.random.SeedSequence([int(self.random_state) & ((1 << 64) - 1), 1]))
        self.weights_ = rng.normal(0.0, 0.01, size=(c, d))
        self.bias_ = np.zeros(c, dtype=np.float64)
        self.classes_ = np.arange(c)
        self.loss_curve_ = []
        for epoch in range(self.epochs):
            perm = rng.permutation(n)
            total = 0.0
            for start in range(0, n, self.batch_size):
                idx = perm[start : start + self.batch_size]
                loss, gw, gb = kl_batch_loss_and_grads(self.weights_, self.bias_, X[idx], T[idx])
                if not np.isfinite(loss):
                    raise TrainingDiverged(epoch)
                self.weights_ -= self.lr * gw
                self.bias_ -= self.lr * gb
                total += loss * idx.size
            self.loss_curve_.append(total / n)
        return self

    def predict_proba(self, X):
        X = check_finite_2d(X, "X")
        return softmax_rows(X @ self.weights_.T + self.bias_[None, :])

    def predict(self, X):
        return self.predict_proba(X).argmax(axis=1)


def evaluate_student(student, X, y) -> float:
    """Top-1 accuracy of the student on integer-labelled data."""
    y = np.asarray(y)
    if y.size == 0:
        raise ValueError("test set is empty")
    pred = student.predict(X)
    return float((pred == y).mean())


def seeded_accuracy_runs(
    train_X, train_T, test_X, test_y, cfg: TrainConfig, seeds: list[int]
) -> tuple[float, float, list[float]]:
    """Train one freshly initialized student per seed and report mean/std accuracy."""
    accs = []
    for s in seeds:
        student = SoftmaxLinearStudent(
            epochs=cfg.epochs, lr=cfg.lr, batch_size=cfg.batch_size, random_state=s
        ).fit(train_X, train_T)
        accs.append(evaluate_student(student, test_X, test_y))
    arr = np.asarray(accs)
    return float(arr.mean()), float(arr.std()), accs


def image_to_features(image: np.ndarray, side: int = 16) -> np.ndarray:
    """Flattened low-resolution pixels in [0, 1]; the student's input space."""
    small = resize_bilinear(np.asarray(image), (side, side))
    return small.astype(np.float64).ravel() / 255.0
