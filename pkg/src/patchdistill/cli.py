"""The ``distill`` command-line interface.

Exit codes: 0 success, 2 configuration error, 3 backend error,
4 infeasible request.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .calibration import generate_soft_labels, write_soft_labels
from .dataset import SourceStore
from .errors import BackendError, ConfigError, InfeasibleError
from .mockworld import MockTeacher, MockWorldSpec
from .pipeline import (
    LABELS_BASE,
    DistillConfig,
    emit_cluster_grid,
    manifest_eval,
    run_distill,
    slice_run,
)
from .reconstruct import SyntheticManifest
from .remote import RemoteTeacher


def _exit_code(err: Exception) -> int:
    if isinstance(err, InfeasibleError):
        return 4
    if isinstance(err, ConfigError):
        return 2
    if isinstance(err, BackendError):
        return 3
    return 1


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ConfigError, BackendError, InfeasibleError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(_exit_code(e))


@click.group()
def cli():
    """Distill a labeled image dataset into a small synthetic set."""


@cli.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--ipc", type=int, default=None, help="Override images per class.")
@click.option("--mode", type=click.Choice(["mosaic", "single"]), default=None)
@click.option("--out", type=click.Path(), default=None, help="Override the output directory.")
def run_cmd(config_path, seed, ipc, mode, out):
    """Run the full distillation pipeline from a JSON config."""

    def go():
        overrides = {"seed": seed, "ipc": ipc, "mode": mode, "output_dir": out}
        cfg = DistillConfig.load(config_path, overrides)
        result = run_distill(cfg)
        click.echo(f"manifest: {result.manifest_path}")
        if result.labels_base is not None:
            click.echo(f"soft labels: {result.labels_base}.bin")
        click.echo(f"report: {result.report_path}")

    _guard(go)


@cli.command("slice")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--classes", default=None, help="Comma-separated class subset.")
@click.option("--ipc", type=int, default=None, help="Smaller IPC to slice down to.")
@click.option("--out", required=True, type=click.Path())
def slice_cmd(manifest_path, classes, ipc, out):
    """Slice an existing manifest to a class subset and/or smaller IPC."""

    def go():
        class_list = [c.strip() for c in classes.split(",") if c.strip()] if classes else None
        result = slice_run(manifest_path, out, classes=class_list, ipc=ipc)
        click.echo(f"manifest: {result.manifest_path}")

    _guard(go)


@cli.command("labels")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--teacher", default="mock", help="'mock' or a sidecar endpoint URL.")
@click.option("--out", type=click.Path(), default=None, help="Output base path (default: alongside the manifest).")
def labels_cmd(manifest_path, teacher, out):
    """Generate teacher soft labels for every item of a manifest."""

    def go():
        manifest = SyntheticManifest.read(manifest_path)
        cfg = manifest.header.config
        store = SourceStore(cfg["dataset_root"], cfg["resize_edge"])
        if teacher == "mock":
            backend_cfg = cfg.get("backend", {})
            if backend_cfg.get("kind") != "mock":
                raise ConfigError("the mock teacher requires a mock-backend manifest")
            t = MockTeacher(MockWorldSpec.load(backend_cfg["world"]))
        else:
            t = RemoteTeacher(teacher)
        probs = generate_soft_labels(manifest, t, store.load)
        base = Path(out) if out else Path(manifest_path).parent / LABELS_BASE
        bin_path, meta_path = write_soft_labels(base, probs, t.class_names)
        click.echo(f"soft labels: {bin_path} ({probs.shape[0]} records)")

    _guard(go)


@cli.command("grid")
@click.option("--dump", "dump_path", required=True, type=click.Path(exists=True))
@click.option("-n", "n_clusters", type=int, default=3, help="Top clusters (rows).")
@click.option("-m", "m_per_cluster", type=int, default=5, help="Patches per cluster (columns).")
@click.option("--class-name", default=None)
@click.option("--out", type=click.Path(), default=None)
def grid_cmd(dump_path, n_clusters, m_per_cluster, class_name, out):
    """Render a cluster grid image from a feature dump."""

    def go():
        out_path = Path(out) if out else Path(dump_path).parent / "cluster_grid.png"
        img, legend = emit_cluster_grid(
            dump_path, n_clusters, m_per_cluster, out_path, class_name=class_name
        )
        click.echo(f"grid: {img}")
        click.echo(f"legend: {legend}")

    _guard(go)


@cli.command("eval")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--seeds", type=int, default=5, help="Number of seeded student trainings.")
@click.option("--epochs", type=int, default=30)
@click.option("--lr", type=float, default=0.5)
@click.option("--batch-size", type=int, default=32)
@click.option("--test-dir", type=click.Path(exists=True), default=None)
def eval_cmd(manifest_path, seeds, epochs, lr, batch_size, test_dir):
    """Train seeded students on the distilled set and report accuracy."""

    def go():
        result = manifest_eval(
            manifest_path,
            seeds=list(range(seeds)),
            epochs=epochs,
            lr=lr,
            batch_size=batch_size,
            test_dir=test_dir,
        )
        click.echo(json.dumps(result, indent=2, sort_keys=True))

    _guard(go)


@cli.command("mockdata")
@click.option("--out", required=True, type=click.Path(), help="Dataset root to write.")
@click.option("--world", "world_path", type=click.Path(exists=True), default=None)
@click.option("--n-classes", type=int, default=3)
@click.option("--per-class", type=int, default=60)
@click.option("--jitter", type=float, default=0.0)
@click.option("--seed", type=int, default=0)
@click.option("--save-world", type=click.Path(), default=None)
def mockdata_cmd(out, world_path, n_classes, per_class, jitter, seed, save_world):
    """Materialize a planted-signal mock dataset for demos and smoke tests."""

    def go():
        if world_path:
            world = MockWorldSpec.load(world_path)
        else:
            world = MockWorldSpec.demo(
                n_classes=n_classes, jitter=jitter, images_per_class=per_class, seed=seed
            )
        root = world.materialize(out)
        target = Path(save_world) if save_world else Path(out) / "world.json"
        world.save(target)
        click.echo(f"dataset: {root}")
        click.echo(f"world: {target}")

    _guard(go)


def main():
    cli()


if __name__ == "__main__":
    main()
