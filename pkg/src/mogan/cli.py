"""Command line interface: train, generate, edit, animate, eval, serve."""

from __future__ import annotations

import shutil
from pathlib import Path

import click
import torch

from .imaging import RoiBox, load_image
from .project import ProjectNotFoundError, ProjectStateError, ProjectStore
from .trainer import AblationFlags, TrainConfig, TrainingDivergedError


def _parse_roi(value: str) -> RoiBox:
    try:
        parts = [int(p) for p in value.split(",")]
        if len(parts) != 4:
            raise ValueError
        return RoiBox(*parts)
    except ValueError as exc:
        raise click.UsageError(f"--roi expects x0,y0,x1,y1 integers, got {value!r}: {exc}")


@click.group()
@click.option(
    "--home",
    envvar="MOGAN_HOME",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Project store root (defaults to $MOGAN_HOME or ~/.mogan).",
)
@click.pass_context
def main(ctx: click.Context, home: Path | None) -> None:
    """Region-aware single-image generative training and sampling."""
    torch.set_num_threads(1)  # reproducible and fastest on small tensors
    ctx.obj = ProjectStore(home)


@main.command()
@click.argument("image", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--roi", "rois", multiple=True, required=True, help="x0,y0,x1,y1 (repeatable).")
@click.option("--profile", type=click.Choice(["desk", "paper"]), default="desk", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--iters", type=int, default=None, help="Override iterations per scale.")
@click.option("--base-channels", type=int, default=None)
@click.option(
    "--ablation",
    type=click.Choice(["full", "no_deformable", "no_attention", "no_injector", "baseline"]),
    default="full",
    show_default=True,
)
@click.option("--no-resume", is_flag=True, help="Ignore an existing partial checkpoint.")
@click.pass_obj
def train(
    store: ProjectStore,
    image: Path,
    rois: tuple[str, ...],
    profile: str,
    seed: int,
    iters: int | None,
    base_channels: int | None,
    ablation: str,
    no_resume: bool,
) -> None:
    """Create a project from IMAGE, train both branches, print the project id."""
    boxes = [_parse_roi(r) for r in rois]
    overrides: dict = {"seed": seed, "ablation": AblationFlags.preset(ablation)}
    if iters is not None:
        overrides["iters_per_scale"] = iters
    if base_channels is not None:
        overrides["base_channels"] = base_channels
    config = TrainConfig.profile(profile, **overrides)
    try:
        project_id = store.create_project(load_image(image))
        store.set_roi(project_id, boxes)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    click.echo(f"project: {project_id}")
    try:
        store.train(project_id, config, resume=not no_resume)
    except TrainingDivergedError as exc:
        raise click.ClickException(f"training diverged: {exc}")
    click.echo(project_id)


@main.command()
@click.argument("project_id")
@click.option("--count", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--band-px", type=int, default=3, show_default=True)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None)
@click.pass_obj
def generate(
    store: ProjectStore,
    project_id: str,
    count: int,
    seed: int,
    band_px: int,
    out: Path | None,
) -> None:
    """Write COUNT random samples and print their paths."""
    records = _run(lambda: store.generate(project_id, count=count, seed=seed, band_px=band_px))
    for record in records:
        path = Path(record.path)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            path = Path(shutil.copy2(path, out / path.name))
        click.echo(str(path))


@main.command()
@click.argument("project_id")
@click.argument("edited_image", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--band-px", type=int, default=3, show_default=True)
@click.option(
    "--guide-min-scale",
    type=int,
    default=0,
    show_default=True,
    help="Feed the edit only to injectors at or above this scale index.",
)
@click.pass_obj
def edit(
    store: ProjectStore,
    project_id: str,
    edited_image: Path,
    seed: int,
    band_px: int,
    guide_min_scale: int,
) -> None:
    """Harmonize EDITED_IMAGE (same dims as the source) through the model."""
    record = _run(
        lambda: store.edit(
            project_id,
            load_image(edited_image),
            seed=seed,
            band_px=band_px,
            guide_min_scale=guide_min_scale,
        )
    )
    click.echo(record.path)


@main.command()
@click.argument("project_id")
@click.option("--kind", default="rotation", show_default=True)
@click.option("--frames", type=int, default=8, show_default=True)
@click.option("--level-max", type=float, default=0.5, show_default=True)
@click.option("--fps", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_obj
def animate(
    store: ProjectStore,
    project_id: str,
    kind: str,
    frames: int,
    level_max: float,
    fps: int,
    seed: int,
) -> None:
    """Render an animation frame directory plus its manifest."""
    records, manifest = _run(
        lambda: store.animate(
            project_id, kind=kind, frames=frames, level_max=level_max, fps=fps, seed=seed
        )
    )
    click.echo(str(manifest))
    for record in records:
        click.echo(record.path)


@main.command("eval")
@click.argument("project_id")
@click.option("--samples", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--target",
    "targets",
    multiple=True,
    type=click.Choice(["whole", "roi_only", "background_only"]),
    help="Evaluation targets (default: all three).",
)
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=None,
    help="Report directory (default: <project>/report).",
)
@click.pass_obj
def eval_cmd(
    store: ProjectStore,
    project_id: str,
    samples: int,
    seed: int,
    targets: tuple[str, ...],
    out: Path | None,
) -> None:
    """Evaluate SIFID/diversity/GQI and render the report files."""
    from .report import render_markdown, write_metrics_report

    chosen = targets or ("whole", "roi_only", "background_only")
    reports = _run(
        lambda: store.evaluate(project_id, num_samples=samples, targets=chosen, seed=seed)
    )
    out_dir = out or (store.project_dir(project_id) / "report")
    progress = store.project_dir(project_id) / "progress.jsonl"
    paths = write_metrics_report(reports, out_dir, progress_path=progress)
    click.echo(render_markdown(reports))
    for name, path in paths.items():
        click.echo(f"{name}: {path}")


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.pass_obj
def serve(store: ProjectStore, host: str, port: int) -> None:
    """Run the HTTP job service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(store), host=host, port=port)


def _run(fn):
    try:
        return fn()
    except ProjectNotFoundError as exc:
        raise click.ClickException(f"unknown project or sample: {exc}")
    except (ProjectStateError, ValueError) as exc:
        raise click.ClickException(str(exc))


if __name__ == "__main__":
    main()
