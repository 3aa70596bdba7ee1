"""Project persistence and the end-to-end application operations.

A project is a directory tree under the store root:

    projects/<id>/source.png      training image
    projects/<id>/roi.json        ROI box list
    projects/<id>/status.json     lifecycle + latest progress record
    projects/<id>/progress.jsonl  one JSON record per training iteration
    projects/<id>/checkpoint/     manifest + parameter blobs
    projects/<id>/samples/        generated PNGs + their records
    projects/<id>/animations/     frame directories + manifests

No database: it is a single-user tool, and every artifact is regenerable
from (checkpoint, sample record).
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from . import sampling
from .augment import KINDS, AugmentDescriptor, level_schedule
from .imaging import (
    PyramidSpec,
    RoiBox,
    check_boxes,
    load_image,
    mask_background,
    save_image,
    save_mask,
    validate_image,
)
from .trainer import (
    Checkpoint,
    TrainConfig,
    build_project_stacks,
    derive_seed,
    load_checkpoint,
    save_checkpoint,
    train_branch,
)

__all__ = [
    "ProjectStore",
    "SampleRecord",
    "TrainedProject",
    "ProjectNotFoundError",
    "ProjectStateError",
    "default_store_root",
]

STATUSES = ("created", "training", "trained", "failed")


class ProjectNotFoundError(KeyError):
    pass


class ProjectStateError(RuntimeError):
    """Operation not allowed in the project's current lifecycle state."""


def default_store_root() -> Path:
    env = os.environ.get("MOGAN_HOME")
    if env:
        return Path(env).expanduser()
    return Path.home() / ".mogan"


@dataclass(frozen=True)
class SampleRecord:
    """Provenance of one generated artifact; together with the checkpoint it
    regenerates the sample bit-exactly."""

    id: str
    project_id: str
    kind: str  # random | edit | animation_frame
    seed: int
    band_px: int
    augment: list[dict] | None  # descriptor JSON per ROI box
    path: str
    created: str
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "project_id": self.project_id,
            "kind": self.kind,
            "seed": self.seed,
            "band_px": self.band_px,
            "augment": self.augment,
            "path": self.path,
            "created": self.created,
            "extra": self.extra,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SampleRecord":
        return cls(**data)


@dataclass
class TrainedProject:
    """A trained project's loaded model stacks, ready for generation."""

    project_id: str
    checkpoint: Checkpoint

    @property
    def is_trained(self) -> bool:
        return all(stack.fully_frozen for stack in self.checkpoint.stacks.values())


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S")


class ProjectStore:
    """Filesystem-backed project registry.

    Mutating operations (training, ROI edits) serialize through a per-project
    lock; generation on trained projects is read-only and runs in parallel.
    """

    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else default_store_root()
        (self.root / "projects").mkdir(parents=True, exist_ok=True)
        self._registry_lock = threading.Lock()
        self._locks: dict[str, threading.Lock] = {}
        self._live_status: dict[str, dict] = {}
        self._running: set[str] = set()
        self._loaded: dict[str, TrainedProject] = {}

    # -- paths ---------------------------------------------------------------

    def project_dir(self, project_id: str) -> Path:
        path = self.root / "projects" / project_id
        if not path.exists():
            raise ProjectNotFoundError(project_id)
        return path

    def _lock_for(self, project_id: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(project_id, threading.Lock())

    def list_projects(self) -> list[str]:
        return sorted(p.name for p in (self.root / "projects").iterdir() if p.is_dir())

    # -- lifecycle -----------------------------------------------------------

    def create_project(self, image: np.ndarray | str | Path) -> str:
        if isinstance(image, (str, Path)):
            image = load_image(image)
        image = validate_image(image, min_dim=25)
        project_id = uuid.uuid4().hex[:12]
        path = self.root / "projects" / project_id
        path.mkdir(parents=True)
        save_image(image, path / "source.png")
        (path / "roi.json").write_text(json.dumps([]))
        self._write_status(project_id, {"status": "created"})
        return project_id

    def set_roi(self, project_id: str, boxes: list[RoiBox]) -> None:
        path = self.project_dir(project_id)
        status = self.get_status(project_id)["status"]
        if status in ("training", "trained"):
            raise ProjectStateError(
                f"cannot change ROI boxes of a {status} project"
            )
        image = load_image(path / "source.png")
        check_boxes(boxes, image.shape[0], image.shape[1])
        (path / "roi.json").write_text(json.dumps([b.to_json() for b in boxes]))

    def get_roi(self, project_id: str) -> list[RoiBox]:
        path = self.project_dir(project_id)
        data = json.loads((path / "roi.json").read_text())
        return [RoiBox.from_json(b) for b in data]

    def source_image(self, project_id: str) -> np.ndarray:
        return load_image(self.project_dir(project_id) / "source.png")

    def _write_status(self, project_id: str, status: dict) -> None:
        status = {**status, "updated": _now()}
        self._live_status[project_id] = status
        path = self.root / "projects" / project_id / "status.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(status))
        tmp.replace(path)

    def get_status(self, project_id: str) -> dict:
        self.project_dir(project_id)
        live = self._live_status.get(project_id)
        if live is not None:
            return dict(live)
        path = self.root / "projects" / project_id / "status.json"
        if path.exists():
            return json.loads(path.read_text())
        return {"status": "created"}

    def is_training(self, project_id: str) -> bool:
        with self._registry_lock:
            return project_id in self._running

    # -- training ------------------------------------------------------------

    def train(
        self,
        project_id: str,
        config: TrainConfig | None = None,
        resume: bool = True,
        parallel_branches: bool = False,
    ) -> None:
        """Train both branches and write the checkpoint.  Blocks the caller;
        run it in a thread for job-style usage.  Raises ProjectStateError if
        a job is already running or the project is already trained."""
        path = self.project_dir(project_id)
        config = config or TrainConfig()
        with self._registry_lock:
            if project_id in self._running:
                raise ProjectStateError("training already running for this project")
            status = self.get_status(project_id)["status"]
            if status == "trained":
                raise ProjectStateError("project is already trained")
            self._running.add(project_id)
        try:
            self._write_status(project_id, {"status": "training"})
            self._train_locked(project_id, path, config, resume, parallel_branches)
            self._write_status(project_id, {"status": "trained"})
        except Exception as exc:
            self._write_status(project_id, {"status": "failed", "error": str(exc)})
            raise
        finally:
            with self._registry_lock:
                self._running.discard(project_id)

    def _train_locked(
        self,
        project_id: str,
        path: Path,
        config: TrainConfig,
        resume: bool,
        parallel_branches: bool,
    ) -> None:
        image = load_image(path / "source.png")
        boxes = self.get_roi(project_id)
        spec = PyramidSpec.derive(
            image.shape[0],
            image.shape[1],
            rescale_factor=config.rescale_factor,
            min_coarse_dim=config.min_coarse_dim,
        )
        save_mask(mask_background(image, boxes).mask, path / "mask.png")
        checkpoint_dir = path / "checkpoint"
        stacks = None
        if resume and (checkpoint_dir / "manifest.json").exists():
            previous = load_checkpoint(checkpoint_dir)
            if previous.config.to_json() == config.to_json() and [
                b.to_json() for b in previous.boxes
            ] == [b.to_json() for b in boxes]:
                stacks = previous.stacks
        if stacks is None:
            stacks = build_project_stacks(image, boxes, spec, config)

        progress_path = path / "progress.jsonl"
        progress_lock = threading.Lock()
        # Status "scale" is a monotone stage ordinal (scale-trainings started
        # so far, across branches); raw indices stay in branch/scale_index.
        stages: dict[tuple, int] = {}

        def sink(record: dict) -> None:
            with progress_lock:
                with progress_path.open("a") as fh:
                    fh.write(json.dumps(record) + "\n")
                key = (record["branch"], record["scale"])
                stage = stages.setdefault(key, len(stages))
                self._live_status[project_id] = {
                    "status": "training",
                    "branch": record["branch"],
                    "scale": stage,
                    "scale_index": record["scale"],
                    "step": record["step"],
                    "losses": {
                        k: record[k] for k in ("l0_g", "l0_d", "l1", "l2", "gp")
                    },
                    "updated": _now(),
                }

        def persist(_stack, _scale) -> None:
            # Per-scale persistence keeps interrupted runs resumable.
            with progress_lock:
                save_checkpoint(checkpoint_dir, image, boxes, spec, config, stacks)

        def run(name: str) -> None:
            train_branch(
                stacks[name],
                config,
                progress_sink=sink,
                on_scale_complete=persist,
                tag=name,
            )

        names = list(stacks.keys())
        if parallel_branches:
            threads = [
                threading.Thread(target=run, args=(name,), name=f"train-{name}")
                for name in names
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        else:
            for name in names:
                run(name)
        save_checkpoint(checkpoint_dir, image, boxes, spec, config, stacks)
        self._loaded.pop(project_id, None)

    def load_trained(self, project_id: str) -> TrainedProject:
        path = self.project_dir(project_id)
        if self.get_status(project_id)["status"] != "trained":
            raise ProjectStateError("project is not trained yet")
        cached = self._loaded.get(project_id)
        if cached is not None:
            return cached
        checkpoint = load_checkpoint(path / "checkpoint")
        trained = TrainedProject(project_id=project_id, checkpoint=checkpoint)
        self._loaded[project_id] = trained
        return trained

    # -- generation ----------------------------------------------------------

    def _new_sample_id(self, project_id: str) -> str:
        return f"{project_id}-{uuid.uuid4().hex[:8]}"

    def _samples_dir(self, project_id: str) -> Path:
        path = self.project_dir(project_id) / "samples"
        path.mkdir(exist_ok=True)
        return path

    def _write_record(self, record: SampleRecord) -> None:
        samples = self._samples_dir(record.project_id)
        (samples / f"{record.id}.json").write_text(json.dumps(record.to_json(), indent=2))

    def generate(
        self,
        project_id: str,
        count: int = 1,
        seed: int = 0,
        band_px: int = 3,
    ) -> list[SampleRecord]:
        """Random samples: per-box ROI generation fused over a fresh background."""
        trained = self.load_trained(project_id)
        samples_dir = self._samples_dir(project_id)
        records = []
        for i in range(count):
            sample_seed = sampling.derive_sample_seed(seed, "random", i)
            composed = sampling.compose_random(trained.checkpoint, sample_seed, band_px)
            sample_id = self._new_sample_id(project_id)
            out_path = samples_dir / f"{sample_id}.png"
            save_image(composed.whole, out_path)
            record = SampleRecord(
                id=sample_id,
                project_id=project_id,
                kind="random",
                seed=sample_seed,
                band_px=band_px,
                augment=[d.to_json() for d in composed.plan.descriptors],
                path=str(out_path),
                created=_now(),
                extra={"request_seed": seed, "index": i},
            )
            self._write_record(record)
            records.append(record)
        return records

    def edit(
        self,
        project_id: str,
        edited_image: np.ndarray,
        seed: int = 0,
        band_px: int = 3,
        guide_min_scale: int = 0,
    ) -> SampleRecord:
        """Harmonize a user-edited image through the frozen injectors."""
        trained = self.load_trained(project_id)
        edited = validate_image(edited_image)
        composed = sampling.compose_edit(
            trained.checkpoint, edited, seed, band_px, guide_min_scale=guide_min_scale
        )
        sample_id = self._new_sample_id(project_id)
        samples_dir = self._samples_dir(project_id)
        input_path = samples_dir / f"{sample_id}_input.png"
        save_image(edited, input_path)
        out_path = samples_dir / f"{sample_id}.png"
        save_image(composed.whole, out_path)
        record = SampleRecord(
            id=sample_id,
            project_id=project_id,
            kind="edit",
            seed=seed,
            band_px=band_px,
            augment=None,
            path=str(out_path),
            created=_now(),
            extra={"edited_input": str(input_path), "guide_min_scale": guide_min_scale},
        )
        self._write_record(record)
        return record

    def animate(
        self,
        project_id: str,
        kind: str,
        frames: int,
        level_max: float,
        fps: int = 10,
        seed: int = 0,
        band_px: int = 3,
    ) -> tuple[list[SampleRecord], Path]:
        """Frames along a level schedule with a fixed noise seed throughout."""
        if kind not in KINDS:
            raise ValueError(f"unknown augmentation kind {kind!r}")
        trained = self.load_trained(project_id)
        schedule = level_schedule(
            kind, frames, level_max, seed=derive_seed(seed, "animate", "aug")
        )
        noise_seed = derive_seed(seed, "animate", "noise")
        anim_id = uuid.uuid4().hex[:8]
        frames_dir = self.project_dir(project_id) / "animations" / anim_id
        frames_dir.mkdir(parents=True)
        records = []
        for f, desc in enumerate(schedule):
            plan = sampling.plan_fixed_sample(trained.checkpoint, noise_seed, band_px, desc)
            composed = sampling.compose(trained.checkpoint, plan)
            frame_path = frames_dir / f"frame_{f:03d}.png"
            save_image(composed.whole, frame_path)
            record = SampleRecord(
                id=f"{project_id}-{anim_id}-{f:03d}",
                project_id=project_id,
                kind="animation_frame",
                seed=noise_seed,
                band_px=band_px,
                augment=[desc.to_json()],
                path=str(frame_path),
                created=_now(),
                extra={"animation": anim_id, "frame": f, "fps": fps},
            )
            records.append(record)
        manifest = {
            "animation": anim_id,
            "fps": fps,
            "kind": kind,
            "level_max": level_max,
            "seed": seed,
            "frames": [r.path for r in records],
        }
        manifest_path = frames_dir / "manifest.json"
        manifest_path.write_text(json.dumps(manifest, indent=2))
        for record in records:
            self._write_record(record)
        return records, manifest_path

    def regenerate(self, record: SampleRecord) -> np.ndarray:
        """Rebuild a sample image from its record and the checkpoint alone."""
        trained = self.load_trained(record.project_id)
        if record.kind == "edit":
            edited = load_image(record.extra["edited_input"])
            return sampling.compose_edit(
                trained.checkpoint,
                edited,
                record.seed,
                record.band_px,
                guide_min_scale=int(record.extra.get("guide_min_scale", 0)),
            ).whole
        descriptors = tuple(
            AugmentDescriptor.from_json(d) for d in (record.augment or [])
        )
        if record.kind == "random":
            plan = sampling.SamplePlan(
                seed=record.seed, band_px=record.band_px, descriptors=descriptors
            )
        elif record.kind == "animation_frame":
            plan = sampling.plan_fixed_sample(
                trained.checkpoint, record.seed, record.band_px, descriptors[0]
            )
        else:
            raise ValueError(f"unknown sample kind {record.kind!r}")
        return sampling.compose(trained.checkpoint, plan).whole

    def get_sample(self, sample_id: str) -> SampleRecord:
        project_id = sample_id.split("-", 1)[0]
        try:
            samples_dir = self.project_dir(project_id) / "samples"
        except ProjectNotFoundError:
            raise ProjectNotFoundError(sample_id) from None
        record_path = samples_dir / f"{sample_id}.json"
        if not record_path.exists():
            raise ProjectNotFoundError(sample_id)
        return SampleRecord.from_json(json.loads(record_path.read_text()))

    # -- evaluation ----------------------------------------------------------

    def evaluate(
        self,
        project_id: str,
        num_samples: int = 20,
        targets: tuple[str, ...] = metrics_mod.TARGETS,
        seed: int = 0,
        band_px: int = 3,
        fx: "metrics_mod.FeatureExtractor | None" = None,
    ) -> list["metrics_mod.MetricsReport"]:
        trained = self.load_trained(project_id)
        reports = metrics_mod.evaluate_project(
            trained,
            num_samples=num_samples,
            targets=targets,
            fx=fx,
            seed=seed,
            band_px=band_px,
        )
        out = self.project_dir(project_id) / "metrics.json"
        out.write_text(json.dumps([r.to_json() for r in reports], indent=2))
        return reports
