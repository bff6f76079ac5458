"""End-to-end distillation: ingest, score, aggregate, reconstruct, calibrate.

One run walks the dataset class by class: sample a per-class subset, score
every image's patches against its label prompt, cluster the best patches on
diffusion features, select by quota, write synthetic images plus a manifest,
and attach teacher soft labels. Everything downstream of (config, seed) is
deterministic, so a full-size single-mode manifest can later be sliced to
any smaller setting without touching the backend again.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .calibration import (
    TrainConfig,
    generate_soft_labels,
    image_to_features,
    read_soft_labels,
    seeded_accuracy_runs,
    write_soft_labels,
)
from .clustering import (
    TILES_PER_ITEM,
    ClusterConfig,
    allocate_quota,
    cluster_candidates,
    select_final_patches,
)
from .dataset import SourceStore, sample_subset, scan_dataset
from .errors import ConfigError, InfeasibleError
from .mockworld import MockBackend, MockTeacher, MockWorldSpec
from .reconstruct import (
    CropBox,
    ManifestHeader,
    SyntheticManifest,
    TileRef,
    build_synthetic_set,
    crop_patch,
    regenerate_images,
    render_item,
    resize_bilinear,
)
from .remote import RemoteBackend, RemoteTeacher
from .scoring import PatchWindow, ScoreConfig, loss_diff_map, pool_patch_scores, top_candidates
from .types import Backend, PromptSpec, Teacher, stable_hash64

MANIFEST_NAME = "manifest.jsonl"
LABELS_BASE = "soft_labels"
DUMP_NAME = "features.jsonl"
REPORT_NAME = "report.jsonl"


@dataclass
class DistillConfig:
    """Every knob of a distillation run; JSON-serializable and hashable."""

    dataset_root: str
    output_dir: str
    backend: dict = field(default_factory=lambda: {"kind": "mock", "world": ""})
    classes: list[str] | None = None
    label_texts: dict[str, str] = field(default_factory=dict)
    ipc: int = 10
    mode: str | None = None  # None -> mosaic for ipc <= 10, single otherwise
    images_per_class: int = 300
    resize_edge: int = 256
    window_size: int | None = None  # latent units; None -> 224 / downsample_factor
    window_stride: int = 1
    t_min: float = 0.1
    t_max: float = 0.7
    n_draws: int = 10
    stratified: bool = True
    n_centers: int = 32
    n_top_clusters: int = 10
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-6
    kmeans_restarts: int = 3
    feature_t: float = 1.6
    candidates_per_image: int = 1
    remainder_order: str = "descending"
    teacher: str = "mock"  # "mock", "none", or a sidecar URL
    seed: int = 0
    workers: int = 1
    write_feature_dump: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.ipc < 1:
            raise ConfigError("ipc must be >= 1")
        if self.images_per_class < 1:
            raise ConfigError("images_per_class must be >= 1")
        if self.mode is not None and self.mode not in TILES_PER_ITEM:
            raise ConfigError(f"mode must be one of {sorted(TILES_PER_ITEM)} or null")
        if self.candidates_per_image < 1:
            raise ConfigError("candidates_per_image must be >= 1")
        if self.remainder_order not in ("descending", "ascending"):
            raise ConfigError("remainder_order must be 'descending' or 'ascending'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        kind = self.backend.get("kind")
        if kind not in ("mock", "remote"):
            raise ConfigError("backend.kind must be 'mock' or 'remote'")
        if kind == "mock" and not self.backend.get("world"):
            raise ConfigError("mock backend needs a 'world' file path")
        if kind == "remote" and not self.backend.get("endpoint"):
            raise ConfigError("remote backend needs an 'endpoint' URL")
        try:
            ScoreConfig(t_min=self.t_min, t_max=self.t_max, n_draws=self.n_draws)
            ClusterConfig(
                n_centers=self.n_centers,
                n_top_clusters=self.n_top_clusters,
                max_iters=self.kmeans_max_iters,
                tol=self.kmeans_tol,
                n_restarts=self.kmeans_restarts,
            )
            if self.window_size is not None:
                PatchWindow(self.window_size, self.window_stride)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        needed = TILES_PER_ITEM[self.effective_mode] * self.ipc
        available = self.images_per_class * self.candidates_per_image
        if needed > available:
            raise InfeasibleError(
                f"{self.effective_mode} mode at IPC={self.ipc} needs {needed} patches per class "
                f"but images_per_class x candidates_per_image only yields {available}; "
                f"raise images_per_class or candidates_per_image, or lower IPC"
            )

    @property
    def effective_mode(self) -> str:
        if self.mode is not None:
            return self.mode
        return "mosaic" if self.ipc <= 10 else "single"

    def score_config(self) -> ScoreConfig:
        return ScoreConfig(
            t_min=self.t_min,
            t_max=self.t_max,
            n_draws=self.n_draws,
            rng_seed=stable_hash64("score", self.seed),
            stratified=self.stratified,
        )

    def cluster_config(self, class_name: str) -> ClusterConfig:
        return ClusterConfig(
            n_centers=self.n_centers,
            n_top_clusters=self.n_top_clusters,
            max_iters=self.kmeans_max_iters,
            tol=self.kmeans_tol,
            rng_seed=stable_hash64("cluster", self.seed, class_name),
            n_restarts=self.kmeans_restarts,
        )

    def to_json(self) -> dict:
        return {
            "dataset_root": self.dataset_root,
            "output_dir": self.output_dir,
            "backend": self.backend,
            "classes": self.classes,
            "label_texts": self.label_texts,
            "ipc": self.ipc,
            "mode": self.mode,
            "images_per_class": self.images_per_class,
            "resize_edge": self.resize_edge,
            "window_size": self.window_size,
            "window_stride": self.window_stride,
            "t_min": self.t_min,
            "t_max": self.t_max,
            "n_draws": self.n_draws,
            "stratified": self.stratified,
            "n_centers": self.n_centers,
            "n_top_clusters": self.n_top_clusters,
            "kmeans_max_iters": self.kmeans_max_iters,
            "kmeans_tol": self.kmeans_tol,
            "kmeans_restarts": self.kmeans_restarts,
            "feature_t": self.feature_t,
            "candidates_per_image": self.candidates_per_image,
            "remainder_order": self.remainder_order,
            "teacher": self.teacher,
            "seed": self.seed,
            "workers": self.workers,
            "write_feature_dump": self.write_feature_dump,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DistillConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset_root" not in doc or "output_dir" not in doc:
            raise ConfigError("config requires dataset_root and output_dir")
        try:
            return cls(**doc)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "DistillConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        doc.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_json(doc)


class CachingBackend:
    """Per-run memo of backend calls keyed by their full argument identity."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self._loss: dict = {}
        self._feat: dict = {}

    @property
    def downsample_factor(self) -> int:
        return getattr(self.inner, "downsample_factor")

    def encode(self, image, source_id):
        return self.inner.encode(image, source_id)

    def loss_map(self, latent, prompt, draw):
        key = (latent.source_id, latent.origin, latent.shape, prompt.render(), draw.t, draw.noise_seed)
        hit = self._loss.get(key)
        if hit is None:
            hit = self.inner.loss_map(latent, prompt, draw)
            self._loss[key] = hit
        return hit

    def features(self, latent, prompt, feature_t):
        key = (latent.source_id, latent.origin, latent.shape, prompt.render(), feature_t)
        hit = self._feat.get(key)
        if hit is None:
            hit = self.inner.features(latent, prompt, feature_t)
            self._feat[key] = hit
        return hit


def make_backend(cfg: DistillConfig) -> Backend:
    kind = cfg.backend["kind"]
    if kind == "mock":
        world = MockWorldSpec.load(cfg.backend["world"])
        return MockBackend(world)
    return RemoteBackend(cfg.backend["endpoint"])


def make_teacher(cfg: DistillConfig, backend: Backend) -> Teacher | None:
    if cfg.teacher == "none":
        return None
    if cfg.teacher == "mock":
        inner = backend.inner if isinstance(backend, CachingBackend) else backend
        if not isinstance(inner, MockBackend):
            raise ConfigError("the mock teacher requires a mock backend")
        return MockTeacher(inner.world)
    return RemoteTeacher(cfg.teacher)


class RunReporter:
    """JSON-lines event log; timings live here, not in deterministic outputs."""

    def __init__(self, path: Path | None):
        self.path = path
        self._t0 = time.monotonic()
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("")

    def emit(self, event: str, **fields) -> None:
        if self.path is None:
            return
        rec = {"event": event, "elapsed_s": round(time.monotonic() - self._t0, 3), **fields}
        with self.path.open("a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass
class RunResult:
    out_dir: Path
    manifest: SyntheticManifest
    manifest_path: Path
    labels_base: Path | None
    dump_path: Path | None
    report_path: Path | None


def _effective_window(cfg: DistillConfig, latent_shape: tuple[int, int], factor: int) -> PatchWindow:
    if cfg.window_size is not None:
        size = cfg.window_size
    else:
        size = max(1, 224 // factor)
    size = min(size, latent_shape[0], latent_shape[1])
    return PatchWindow(size_latent=size, stride_latent=cfg.window_stride)


def _score_one(args):
    backend, store, relpath, prompt, score_cfg, cfg, window_holder = args
    img = store.load(relpath)
    latent = backend.encode(img, relpath)
    if window_holder[0] is None:
        window_holder[0] = _effective_window(cfg, latent.shape, latent.downsample_factor)
    window = window_holder[0]
    diff = loss_diff_map(latent, prompt, score_cfg, backend)
    smap = pool_patch_scores(diff, window)
    cands = top_candidates(smap, relpath, latent.downsample_factor, k=cfg.candidates_per_image)
    feats = []
    for cand in cands:
        r, c = cand.top_left_latent
        patch_latent = latent.crop(r, c, window.size_latent)
        feats.append(backend.features(patch_latent, prompt, cfg.feature_t).values)
    return cands, feats


def run_distill(
    cfg: DistillConfig,
    backend: Backend | None = None,
    teacher: Teacher | None = None,
) -> RunResult:
    """Execute the full two-stage selection loop and write all artifacts."""
    cfg.validate()
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reporter = RunReporter(out_dir / REPORT_NAME)

    catalog = scan_dataset(cfg.dataset_root, cfg.classes, cfg.label_texts)
    backend = CachingBackend(backend if backend is not None else make_backend(cfg))
    if teacher is None:
        teacher = make_teacher(cfg, backend)
    store = SourceStore(cfg.dataset_root, cfg.resize_edge)
    score_cfg = cfg.score_config()
    mode = cfg.effective_mode
    needed = TILES_PER_ITEM[mode] * cfg.ipc
    subsets = sample_subset(catalog, cfg.images_per_class, cfg.seed)

    reporter.emit(
        "run_start",
        config_hash=ManifestHeader(
            config=cfg.to_json(), mode=mode, counts={}, class_names=[], seed=cfg.seed
        ).config_hash,
        classes=catalog.class_names,
        mode=mode,
        ipc=cfg.ipc,
    )

    for name, subset in subsets.items():
        if needed > len(subset) * cfg.candidates_per_image:
            raise InfeasibleError(
                f"class {name!r}: need {needed} patches but the subset of {len(subset)} images "
                f"yields at most {len(subset) * cfg.candidates_per_image} candidates; "
                f"raise images_per_class/candidates_per_image or lower IPC"
            )

    tiles_by_class: dict[str, list[TileRef]] = {}
    dump_records: list[dict] = []
    window_holder: list[PatchWindow | None] = [None]

    for class_name in catalog.class_names:
        subset = subsets[class_name]
        prompt = PromptSpec.for_label(catalog.label_text(class_name))
        reporter.emit("class_start", class_name=class_name, subset_size=len(subset))

        jobs = [(backend, store, rp, prompt, score_cfg, cfg, window_holder) for rp in subset]
        if cfg.workers > 1:
            # First job runs alone so the shared window is fixed before fan-out.
            results = [_score_one(jobs[0])]
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results.extend(pool.map(_score_one, jobs[1:]))
        else:
            results = [_score_one(j) for j in jobs]

        candidates = []
        features = []
        for cands, feats in results:
            candidates.extend(cands)
            features.extend(feats)
        rhos = np.array([c.rho for c in candidates], dtype=np.float64)
        source_ids = [c.source_id for c in candidates]
        feature_mat = np.stack(features)
        reporter.emit("class_scored", class_name=class_name, n_candidates=len(candidates))

        report = cluster_candidates(feature_mat, rhos, source_ids, cfg.cluster_config(class_name))
        sizes = {int(c): int((report.assignment == c).sum()) for c in np.unique(report.assignment)}
        reporter.emit(
            "cluster_done", class_name=class_name, cluster_sizes=sizes, inertia=report.inertia
        )

        quota = allocate_quota(cfg.ipc, cfg.n_top_clusters, mode)
        selected = select_final_patches(report, quota, rhos, cfg.remainder_order)

        tiles = []
        for sp in selected:
            cand = candidates[sp.index]
            tiles.append(
                TileRef(
                    source_id=cand.source_id,
                    source_path=cand.source_id,
                    box=CropBox(*cand.pixel_box),
                    rho=cand.rho,
                    cluster=sp.cluster,
                    intra_rank=sp.intra_rank,
                    inter_rank=sp.inter_rank,
                )
            )
        tiles_by_class[class_name] = tiles

        if cfg.write_feature_dump:
            selected_idx = {sp.index for sp in selected}
            intra_pos = {
                c: {idx: r for r, idx in enumerate(order)}
                for c, order in report.intra_order.items()
            }
            inter_pos = {c: r for r, c in enumerate(report.inter_order)}
            for i, cand in enumerate(candidates):
                c = int(report.assignment[i])
                dump_records.append(
                    {
                        "kind": "candidate",
                        "class_name": class_name,
                        "source_id": cand.source_id,
                        "source_path": cand.source_id,
                        "offset": list(cand.top_left_latent),
                        "pixel_box": list(cand.pixel_box),
                        "rho": cand.rho,
                        "cluster": c,
                        "intra_rank": intra_pos[c][i],
                        "inter_rank": inter_pos[c],
                        "selected": i in selected_idx,
                        "feature": [float(v) for v in feature_mat[i]],
                    }
                )
        reporter.emit("class_done", class_name=class_name, n_tiles=len(tiles))

    header = ManifestHeader(
        config=cfg.to_json(),
        mode=mode,
        counts={c: cfg.ipc for c in catalog.class_names},
        class_names=catalog.class_names,
        seed=cfg.seed,
    )
    manifest = build_synthetic_set(tiles_by_class, mode, out_dir, store.load, header)
    reporter.emit("images_written", n_items=len(manifest.items))

    labels_base = None
    if teacher is not None:
        probs = generate_soft_labels(manifest, teacher, store.load)
        labels_base = out_dir / LABELS_BASE
        write_soft_labels(labels_base, probs, teacher.class_names)
        reporter.emit("labels_done", n_records=int(probs.shape[0]))

    dump_path = None
    if cfg.write_feature_dump:
        dump_path = out_dir / DUMP_NAME
        with dump_path.open("w") as fh:
            head = {
                "kind": "header",
                "dataset_root": cfg.dataset_root,
                "resize_edge": cfg.resize_edge,
                "class_names": catalog.class_names,
            }
            fh.write(json.dumps(head, sort_keys=True) + "\n")
            for rec in dump_records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    reporter.emit("run_done")
    return RunResult(
        out_dir=out_dir,
        manifest=manifest,
        manifest_path=out_dir / MANIFEST_NAME,
        labels_base=labels_base,
        dump_path=dump_path,
        report_path=out_dir / REPORT_NAME,
    )


# ------------------------------------------------------------------ slicing


def slice_manifest(
    manifest: SyntheticManifest,
    classes: list[str] | None = None,
    ipc: int | None = None,
) -> SyntheticManifest:
    """Restrict a manifest to a class subset and/or a smaller IPC.

    IPC slicing keeps the first items per class; it requires a single-mode
    manifest because mosaic items entangle four patches per image.
    """
    keep_classes = list(manifest.header.class_names)
    if classes is not None:
        unknown = [c for c in classes if c not in keep_classes]
        if unknown:
            raise ConfigError(f"classes not in manifest: {unknown}")
        keep_classes = [c for c in keep_classes if c in set(classes)]
        if not keep_classes:
            raise ConfigError("class slice is empty")
    new_ipc = manifest.header.counts[keep_classes[0]] if keep_classes else 0
    if ipc is not None:
        if manifest.header.mode != "single":
            raise ConfigError("IPC slicing requires a single-mode manifest")
        for c in keep_classes:
            if ipc > manifest.header.counts[c]:
                raise ConfigError(
                    f"cannot slice class {c!r} to IPC={ipc}, manifest only has "
                    f"{manifest.header.counts[c]}"
                )
        new_ipc = ipc

    items = []
    for c in keep_classes:
        per_class = manifest.items_for(c)
        items.extend(per_class[:new_ipc] if ipc is not None else per_class)

    config = dict(manifest.header.config)
    config["classes"] = keep_classes
    if ipc is not None:
        config["ipc"] = new_ipc
    header = ManifestHeader(
        config=config,
        mode=manifest.header.mode,
        counts={c: (new_ipc if ipc is not None else manifest.header.counts[c]) for c in keep_classes},
        class_names=keep_classes,
        seed=manifest.header.seed,
    )
    return SyntheticManifest(header=header, items=items)


def source_store_for(manifest: SyntheticManifest) -> SourceStore:
    cfg = manifest.header.config
    return SourceStore(cfg["dataset_root"], cfg["resize_edge"])


def slice_run(
    manifest_path: str | Path,
    out_dir: str | Path,
    classes: list[str] | None = None,
    ipc: int | None = None,
) -> RunResult:
    """Slice a manifest and materialize the sliced images and labels."""
    manifest_path = Path(manifest_path)
    src = SyntheticManifest.read(manifest_path)
    sliced = slice_manifest(src, classes=classes, ipc=ipc)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = source_store_for(sliced)
    regenerate_images(sliced, out_dir, store.load)
    new_path = sliced.write(out_dir / MANIFEST_NAME)

    labels_base = None
    src_labels = manifest_path.parent / (LABELS_BASE + ".bin")
    if src_labels.exists():
        probs, class_names = read_soft_labels(manifest_path.parent / LABELS_BASE)
        keep = []
        pos = {(it.class_name, it.index): i for i, it in enumerate(src.items)}
        for it in sliced.items:
            keep.append(pos[(it.class_name, it.index)])
        labels_base = out_dir / LABELS_BASE
        write_soft_labels(labels_base, probs[keep], class_names)

    return RunResult(
        out_dir=out_dir,
        manifest=sliced,
        manifest_path=new_path,
        labels_base=labels_base,
        dump_path=None,
        report_path=None,
    )


# --------------------------------------------------------------- grid image


def emit_cluster_grid(
    dump_path: str | Path,
    n_clusters: int,
    m_per_cluster: int,
    out_path: str | Path,
    class_name: str | None = None,
    thumb: int = 96,
) -> tuple[Path, Path]:
    """Render the top-m patches of the top-n clusters as an image grid.

    Rows follow the inter-cluster order, columns the intra-cluster order;
    short rows are padded with neutral gray tiles and flagged in the legend.
    """
    dump_path = Path(dump_path)
    if not dump_path.exists():
        raise ConfigError(f"feature dump {dump_path} does not exist")
    lines = dump_path.read_text().splitlines()
    head = json.loads(lines[0])
    if head.get("kind") != "header":
        raise ConfigError("feature dump is missing its header line")
    records = [json.loads(ln) for ln in lines[1:] if ln.strip()]
    if class_name is None:
        class_name = head["class_names"][0]
    records = [r for r in records if r["class_name"] == class_name]
    if not records:
        raise ConfigError(f"no candidates for class {class_name!r} in dump")

    store = SourceStore(head["dataset_root"], head["resize_edge"])
    by_cluster: dict[int, list[dict]] = {}
    for r in records:
        by_cluster.setdefault(r["cluster"], []).append(r)
    clusters = sorted(by_cluster, key=lambda c: by_cluster[c][0]["inter_rank"])[:n_clusters]

    rows = []
    legend_rows = []
    neutral = np.full((thumb, thumb, 3), 128, dtype=np.uint8)
    for c in clusters:
        members = sorted(by_cluster[c], key=lambda r: r["intra_rank"])[:m_per_cluster]
        tiles = []
        entries = []
        for r in members:
            box = CropBox.from_list(r["pixel_box"])
            crop = crop_patch(store.load(r["source_path"]), box)
            tiles.append(resize_bilinear(crop, (thumb, thumb)))
            entries.append(
                {
                    "source_id": r["source_id"],
                    "offset": r["offset"],
                    "rho": r["rho"],
                    "intra_rank": r["intra_rank"],
                    "padded": False,
                }
            )
        while len(tiles) < m_per_cluster:
            tiles.append(neutral)
            entries.append({"padded": True})
        rows.append(np.concatenate(tiles, axis=1))
        legend_rows.append(
            {"cluster": c, "inter_rank": by_cluster[c][0]["inter_rank"], "entries": entries}
        )

    grid = np.concatenate(rows, axis=0)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(grid).save(out_path)
    legend_path = out_path.with_suffix(".legend.json")
    legend_path.write_text(
        json.dumps(
            {"class_name": class_name, "thumb": thumb, "rows": legend_rows},
            indent=2,
            sort_keys=True,
        )
    )
    return out_path, legend_path


# --------------------------------------------------------------- evaluation


def _mock_test_batch(manifest: SyntheticManifest, n_per_class: int):
    cfg = manifest.header.config
    if cfg.get("backend", {}).get("kind") != "mock":
        raise ConfigError("no test source: pass test_dir for non-mock manifests")
    world = MockWorldSpec.load(cfg["backend"]["world"])
    patch = manifest.items[0].tiles[0].box.w if manifest.items else 24
    return world.test_batch(n_per_class, patch_size=patch, seed=manifest.header.seed + 1)


def manifest_eval(
    manifest_path: str | Path,
    seeds: list[int] | None = None,
    epochs: int = 30,
    lr: float = 0.5,
    batch_size: int = 32,
    test_dir: str | Path | None = None,
    n_test_per_class: int = 20,
    feature_side: int = 16,
) -> dict:
    """Train seeded students on the distilled set and report mean/std accuracy.

    The test pool comes from ``test_dir`` (class-per-directory layout) when
    given; mock-backend manifests can synthesize held-out planted crops.
    """
    manifest_path = Path(manifest_path)
    manifest = SyntheticManifest.read(manifest_path)
    probs, class_names = read_soft_labels(manifest_path.parent / LABELS_BASE)
    if probs.shape[0] != len(manifest.items):
        raise ConfigError("soft-label record count does not match the manifest")
    store = source_store_for(manifest)
    train_X = np.stack(
        [image_to_features(render_item(it, store.load), feature_side) for it in manifest.items]
    )

    if test_dir is not None:
        test_catalog = scan_dataset(test_dir)
        test_store = SourceStore(test_dir, manifest.header.config["resize_edge"])
        images, labels = [], []
        for cname, files in test_catalog.classes.items():
            for rp in files:
                images.append(test_store.load(rp))
                labels.append(cname)
    else:
        images, labels = _mock_test_batch(manifest, n_test_per_class)
    name_to_idx = {n: i for i, n in enumerate(class_names)}
    unknown = sorted({l for l in labels if l not in name_to_idx})
    if unknown:
        raise ConfigError(f"test labels outside the student's class space: {unknown}")
    test_X = np.stack([image_to_features(img, feature_side) for img in images])
    test_y = np.array([name_to_idx[l] for l in labels])

    seeds = list(seeds) if seeds else [0, 1, 2, 3, 4]
    cfg = TrainConfig(epochs=epochs, lr=lr, batch_size=batch_size)
    mean, std, accs = seeded_accuracy_runs(train_X, probs, test_X, test_y, cfg, seeds)
    return {
        "mean_accuracy": mean,
        "std_accuracy": std,
        "per_seed": {str(s): a for s, a in zip(seeds, accs)},
        "n_train": int(train_X.shape[0]),
        "n_test": int(test_X.shape[0]),
        "class_names": class_names,
    }
