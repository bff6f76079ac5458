"""Shared fixtures: closed-form corner worlds and a materialized demo dataset."""

from __future__ import annotations

import dataclasses
from types import SimpleNamespace

import numpy as np
import pytest

from patchdistill.mockworld import MockWorldSpec, PlantedClass, rect_mask


def corner_world(
    grid=(4, 4),
    mask_hw=(2, 2),
    gain=2.0,
    jitter=0.0,
    name="thing",
    extra_classes=(),
) -> MockWorldSpec:
    """A tiny world with one rectangular mask in the top-left corner."""
    classes = [PlantedClass(name=name, mask=rect_mask(grid, 0, 0, *mask_hw), gain=gain)]
    for cname, cgain in extra_classes:
        classes.append(PlantedClass(name=cname, mask=rect_mask(grid, 0, 0, *mask_hw), gain=cgain))
    return MockWorldSpec(classes=classes, jitter=jitter, grid=grid, images_per_class=4)


def ones_latent(world: MockWorldSpec, source_id="img0"):
    from patchdistill.types import LatentMap

    return LatentMap(
        data=np.ones(world.grid, dtype=np.float32), downsample_factor=1, source_id=source_id
    )


@pytest.fixture
def corner4() -> MockWorldSpec:
    return corner_world()


@pytest.fixture(scope="session")
def mockset(tmp_path_factory) -> SimpleNamespace:
    """A 3-class planted world materialized once per session.

    Two world files share the same pixels and differ only in jitter, so
    noise-robustness runs reuse the dataset.
    """
    root = tmp_path_factory.mktemp("mockset")
    world = MockWorldSpec.demo(
        n_classes=3, images_per_class=40, n_styles=2, n_distractors=2, seed=7
    )
    data = world.materialize(root / "data")
    world.save(root / "world0.json")
    noisy = dataclasses.replace(world, jitter=0.2)
    noisy.save(root / "world02.json")
    return SimpleNamespace(
        root=root,
        data=data,
        world=world,
        noisy_world=noisy,
        world0=str(root / "world0.json"),
        world02=str(root / "world02.json"),
    )


def make_report(assignment, features, rhos, source_ids=None):
    """Build a ClusterReport from an explicit assignment (bypassing k-means)."""
    from patchdistill.clustering import ClusterReport, rank_clusters, rank_intra_cluster

    assignment = np.asarray(assignment)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    rhos = np.asarray(rhos, dtype=np.float64)
    if source_ids is None:
        source_ids = [f"s{i}" for i in range(len(rhos))]
    k = int(assignment.max()) + 1
    centroids = np.zeros((k, features.shape[1]))
    for j in range(k):
        members = features[assignment == j]
        if len(members):
            centroids[j] = members.mean(axis=0)
    report = ClusterReport(assignment=assignment, centroids=centroids)
    report.intra_order = rank_intra_cluster(assignment, centroids, features, rhos, source_ids)
    report.inter_order = rank_clusters(assignment, rhos)
    return report


def base_pipeline_config(mockset, out_dir, **overrides) -> dict:
    cfg = dict(
        dataset_root=str(mockset.data),
        output_dir=str(out_dir),
        backend={"kind": "mock", "world": mockset.world0},
        images_per_class=40,
        resize_edge=64,
        window_size=24,
        window_stride=4,
        n_centers=8,
        n_top_clusters=4,
        seed=11,
    )
    cfg.update(overrides)
    return cfg


# ------------------------------------------------- acceptance summary lines


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, text): ties a test to one acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.user_properties.append(("criterion", (marker.args[0], marker.args[1], report.outcome)))


def pytest_terminal_summary(terminalreporter):
    rows = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            for key, val in getattr(rep, "user_properties", []):
                if key == "criterion":
                    rows.append(val)
    if not rows:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num, text, outcome in sorted(rows, key=lambda r: r[0]):
        flag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{flag}] criterion {num:>2}: {text}")
