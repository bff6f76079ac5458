"""Patch aggregation: k-means on diffusion features, ranking, quota selection.

Clustering is static: one seeded k-means pass per class, then candidates are
ranked inside each cluster by distance to the centroid (not by rho) and
clusters are ranked against each other by the median rho of their members.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from ._validation import check_finite_2d
from .errors import InfeasibleError

Mode = Literal["mosaic", "single"]

TILES_PER_ITEM: dict[str, int] = {"mosaic": 4, "single": 1}

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class ClusterConfig:
    n_centers: int = 32
    n_top_clusters: int = 10
    max_iters: int = 100
    tol: float = 1e-6
    rng_seed: int = 0
    n_restarts: int = 3

    def __post_init__(self):
        if self.n_centers < 1 or self.n_top_clusters < 1:
            raise ValueError("cluster counts must be >= 1")
        if self.n_top_clusters > self.n_centers:
            raise ValueError("n_top_clusters must not exceed n_centers")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")


class DeterministicKMeans(BaseEstimator, ClusterMixin):
    """Seeded Lloyd k-means with probabilistic farthest-point init.

    Fully deterministic given ``random_state``: seeding, restart order, and
    every tie-break are fixed. Exposes ``inertia_history_`` (one inertia per
    Lloyd iteration of the winning restart) so monotonicity is checkable.
    """

    def __init__(self, n_clusters=8, max_iter=100, tol=1e-6, n_restarts=3, random_state=0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.n_restarts = n_restarts
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_finite_2d(X, "X")
        n = X.shape[0]
        k = min(self.n_clusters, n)

        if n <= self.n_clusters:
            # Degenerate: every point seeds its own centroid; duplicates all
            # collapse onto the first matching centroid.
            centers = X.copy()
            labels = _nearest(X, centers)[0]
            self.cluster_centers_ = centers
            self.labels_ = labels
            self.inertia_ = 0.0
            self.inertia_history_ = [0.0]
            self.n_iter_ = 0
            return self

        best = None
        for r in range(self.n_restarts):
            rng = np.random.default_rng(
                np.random.SeedSequence([int(self.random_state) & _U64, r])
            )
            centers = _plusplus_init(X, k, rng)
            centers, labels, inertia, history = _lloyd(X, centers, self.max_iter, self.tol)
            if best is None or inertia < best[2]:
                best = (centers, labels, inertia, history)
        centers, labels, inertia, history = best
        self.cluster_centers_ = centers
        self.labels_ = labels
        self.inertia_ = float(inertia)
        self.inertia_history_ = history
        self.n_iter_ = len(history)
        return self

    def predict(self, X):
        X = check_finite_2d(X, "X")
        return _nearest(X, self.cluster_centers_)[0]

    def fit_predict(self, X, y=None):
        return self.fit(X).labels_


def _nearest(X: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    return labels, d2[np.arange(X.shape[0]), labels]


def _plusplus_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=np.float64)
    centers[0] = X[rng.integers(0, n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = X[rng.integers(0, n)]
            continue
        probs = d2 / total
        centers[j] = X[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(
    X: np.ndarray, centers: np.ndarray, max_iter: int, tol: float
) -> tuple[np.ndarray, np.ndarray, float, list[float]]:
    k = centers.shape[0]
    history: list[float] = []
    labels = None
    prev_inertia = None
    for _ in range(max_iter):
        labels, dist = _nearest(X, centers)
        # Re-seed empty clusters onto the point farthest from its centroid.
        for j in range(k):
            if not np.any(labels == j):
                far = int(dist.argmax())
                centers[j] = X[far]
                labels[far] = j
                dist[far] = 0.0
        inertia = float(dist.sum())
        history.append(inertia)
        for j in range(k):
            members = X[labels == j]
            if members.shape[0]:
                centers[j] = members.mean(axis=0)
        if prev_inertia is not None:
            if prev_inertia - inertia <= tol * max(prev_inertia, 1e-300):
                break
        prev_inertia = inertia
    final_labels, final_dist = _nearest(X, centers)
    return centers, final_labels, float(final_dist.sum()), history


@dataclass
class ClusterReport:
    """K-means assignment plus both ranking orders for one class."""

    assignment: np.ndarray
    centroids: np.ndarray
    intra_order: dict[int, list[int]] = field(default_factory=dict)
    inter_order: list[int] = field(default_factory=list)
    inertia: float = 0.0


def rank_intra_cluster(
    assignment: np.ndarray,
    centroids: np.ndarray,
    features: np.ndarray,
    rhos: np.ndarray,
    source_ids: list[str],
) -> dict[int, list[int]]:
    """Within each cluster, candidates ascending by centroid distance;
    ties by rho descending, then source id."""
    order: dict[int, list[int]] = {}
    for j in np.unique(assignment):
        idx = np.where(assignment == j)[0]
        d = np.linalg.norm(features[idx] - centroids[int(j)], axis=1)
        ranked = sorted(
            range(len(idx)), key=lambda i: (d[i], -rhos[idx[i]], source_ids[idx[i]], int(idx[i]))
        )
        order[int(j)] = [int(idx[i]) for i in ranked]
    return order


def rank_clusters(assignment: np.ndarray, rhos: np.ndarray) -> list[int]:
    """Non-empty clusters by descending median rho; ties by size descending,
    then cluster id."""
    entries = []
    for j in np.unique(assignment):
        member_rhos = rhos[assignment == j]
        entries.append((-float(np.median(member_rhos)), -member_rhos.size, int(j)))
    entries.sort()
    return [j for _, _, j in entries]


def cluster_candidates(
    features: np.ndarray, rhos, source_ids: list[str], cfg: ClusterConfig
) -> ClusterReport:
    """Cluster per-class candidate features and attach both rankings."""
    features = check_finite_2d(features, "features")
    rhos = np.asarray(rhos, dtype=np.float64)
    if features.shape[0] != rhos.size or rhos.size != len(source_ids):
        raise ValueError("features, rhos and source_ids must be aligned")
    if features.shape[0] < 1:
        raise ValueError("need at least one candidate to cluster")
    km = DeterministicKMeans(
        n_clusters=cfg.n_centers,
        max_iter=cfg.max_iters,
        tol=cfg.tol,
        n_restarts=cfg.n_restarts,
        random_state=cfg.rng_seed,
    ).fit(features)
    report = ClusterReport(
        assignment=km.labels_,
        centroids=km.cluster_centers_,
        inertia=km.inertia_,
    )
    report.intra_order = rank_intra_cluster(
        km.labels_, km.cluster_centers_, features, rhos, source_ids
    )
    report.inter_order = rank_clusters(km.labels_, rhos)
    return report


@dataclass(frozen=True)
class QuotaPlan:
    """Per-cluster take and global remainder for one class."""

    needed: int
    per_cluster: int
    remainder: int
    n_top: int
    mode: str


def allocate_quota(ipc: int, n_top: int, mode: Mode) -> QuotaPlan:
    """Patch counts per top cluster: needed = 4*IPC (mosaic) or IPC (single),
    split evenly over the top clusters with the leftover filled globally."""
    if ipc < 1 or n_top < 1:
        raise ValueError("ipc and n_top must be >= 1")
    if mode not in TILES_PER_ITEM:
        raise ValueError(f"unknown mode {mode!r}")
    needed = TILES_PER_ITEM[mode] * ipc
    per_cluster = needed // n_top
    remainder = needed - n_top * per_cluster
    return QuotaPlan(needed=needed, per_cluster=per_cluster, remainder=remainder, n_top=n_top, mode=mode)


@dataclass(frozen=True)
class SelectedPatch:
    """One selected candidate with its provenance inside the cluster report.

    ``intra_rank``/``inter_rank`` are positions in the report's orders;
    remainder picks keep their true cluster even when it is outside the top.
    """

    index: int
    cluster: int
    intra_rank: int
    inter_rank: int
    from_remainder: bool = False


def select_final_patches(
    report: ClusterReport,
    quota: QuotaPlan,
    rhos,
    remainder_order: Literal["descending", "ascending"] = "descending",
) -> list[SelectedPatch]:
    """Take the intra-order head of each top cluster, then fill the remainder
    from unused candidates globally by rho.

    Output order: single mode interleaves clusters round-robin by intra rank
    (rank 0 of every top cluster first), which makes a larger-IPC manifest
    sliceable into any smaller one; mosaic mode emits cluster-major blocks so
    consecutive groups of four tiles share a cluster. Remainder picks follow.
    """
    rhos = np.asarray(rhos, dtype=np.float64)
    n = int(report.assignment.size)
    if quota.needed > n:
        raise InfeasibleError(
            f"need {quota.needed} patches but only {n} candidates exist; "
            f"raise the per-class image budget or lower IPC"
        )
    inter_rank = {c: r for r, c in enumerate(report.inter_order)}
    top = report.inter_order[: quota.n_top]
    picks: dict[int, list[int]] = {c: report.intra_order[c][: quota.per_cluster] for c in top}

    selected: list[SelectedPatch] = []
    if quota.mode == "single":
        for r in range(quota.per_cluster):
            for c in top:
                if r < len(picks[c]):
                    selected.append(SelectedPatch(picks[c][r], c, r, inter_rank[c]))
    else:
        for c in top:
            for r, idx in enumerate(picks[c]):
                selected.append(SelectedPatch(idx, c, r, inter_rank[c]))

    used = {s.index for s in selected}
    # Fill everything the top clusters could not provide: the declared
    # remainder, per-cluster shortfalls, and any missing clusters entirely.
    n_fill = quota.needed - len(selected)
    if n_fill > 0:
        sign = -1.0 if remainder_order == "descending" else 1.0
        pool = sorted((i for i in range(n) if i not in used), key=lambda i: (sign * rhos[i], i))
        if len(pool) < n_fill:
            raise InfeasibleError(
                f"remainder needs {n_fill} more patches but only {len(pool)} candidates are unused"
            )
        intra_pos = {
            c: {idx: r for r, idx in enumerate(order)} for c, order in report.intra_order.items()
        }
        for i in pool[:n_fill]:
            c = int(report.assignment[i])
            selected.append(
                SelectedPatch(i, c, intra_pos[c][i], inter_rank[c], from_remainder=True)
            )

    assert len(selected) == quota.needed
    assert len({s.index for s in selected}) == quota.needed
    return selected
