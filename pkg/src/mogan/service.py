"""HTTP job service around the project store.

Training runs as a background thread per project; status polls read the
store's in-memory state and never block on the job.  A second train request
while one is running (or after completion) is rejected with 409.
"""

from __future__ import annotations

import io
import threading
from typing import Literal

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, Response
from PIL import Image as PILImage
from pydantic import BaseModel, Field

from .imaging import RoiBox
from .project import ProjectNotFoundError, ProjectStateError, ProjectStore
from .trainer import AblationFlags, TrainConfig

__all__ = ["create_app", "response_schemas"]


class RoiBoxModel(BaseModel):
    x_min: int = Field(ge=0)
    y_min: int = Field(ge=0)
    x_max: int = Field(gt=0)
    y_max: int = Field(gt=0)


class RoiUpdate(BaseModel):
    boxes: list[RoiBoxModel]


class TrainRequest(BaseModel):
    profile: Literal["desk", "paper"] = "desk"
    seed: int = 0
    iters_per_scale: int | None = Field(default=None, ge=1)
    base_channels: int | None = Field(default=None, ge=4)
    ablation: Literal[
        "full", "no_deformable", "no_attention", "no_injector", "baseline"
    ] = "full"


class GenerateRequest(BaseModel):
    count: int = Field(default=1, ge=1, le=256)
    seed: int = 0
    band_px: int = Field(default=3, ge=0)


class AnimateRequest(BaseModel):
    kind: str = "rotation"
    frames: int = Field(default=8, ge=2)
    level_max: float = Field(default=0.5, ge=0.0, le=1.0)
    fps: int = Field(default=10, ge=1)
    seed: int = 0
    band_px: int = Field(default=3, ge=0)


class ProjectCreated(BaseModel):
    id: str


class RoiStored(BaseModel):
    count: int


class JobStarted(BaseModel):
    job_id: str


class StatusResponse(BaseModel):
    status: Literal["created", "training", "trained", "failed"]
    branch: str | None = None
    scale: int | None = None  # monotone stage ordinal across the whole job
    scale_index: int | None = None  # raw pyramid index (0 = finest)
    step: int | None = None
    losses: dict[str, float] | None = None
    error: str | None = None
    updated: str | None = None


class SampleModel(BaseModel):
    id: str
    kind: str
    seed: int
    band_px: int
    path: str
    augment: list[dict] | None = None


class SampleList(BaseModel):
    samples: list[SampleModel]


class AnimationResponse(BaseModel):
    frames: list[SampleModel]
    fps: int
    manifest: str


class MetricsModel(BaseModel):
    target: Literal["whole", "roi_only", "background_only"]
    sifid: float
    diversity: float
    gqi: float | None
    sample_count: int


def _decode_upload(data: bytes) -> np.ndarray:
    try:
        with PILImage.open(io.BytesIO(data)) as img:
            arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except Exception as exc:
        raise HTTPException(status_code=422, detail=f"cannot decode image: {exc}")
    return arr


def _sample_model(record) -> SampleModel:
    return SampleModel(
        id=record.id,
        kind=record.kind,
        seed=record.seed,
        band_px=record.band_px,
        path=record.path,
        augment=record.augment,
    )


def create_app(store: ProjectStore | None = None) -> FastAPI:
    store = store or ProjectStore()
    app = FastAPI(title="mogan service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],  # single-user local tool; the browser UI runs anywhere
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ProjectNotFoundError)
    async def _not_found(_, exc):
        return Response(status_code=404, content=f"unknown id: {exc}")

    @app.exception_handler(ProjectStateError)
    async def _conflict(_, exc):
        return Response(status_code=409, content=str(exc))

    @app.exception_handler(ValueError)
    async def _unprocessable(_, exc):
        return Response(status_code=422, content=str(exc))

    @app.post("/projects", response_model=ProjectCreated)
    async def create_project(file: UploadFile = File(...)):
        data = await file.read()
        arr = _decode_upload(data)
        return ProjectCreated(id=store.create_project(arr))

    @app.put("/projects/{project_id}/roi", response_model=RoiStored)
    def set_roi(project_id: str, update: RoiUpdate):
        boxes = [RoiBox(b.x_min, b.y_min, b.x_max, b.y_max) for b in update.boxes]
        store.set_roi(project_id, boxes)
        return RoiStored(count=len(boxes))

    @app.get("/projects/{project_id}/roi", response_model=RoiUpdate)
    def get_roi(project_id: str):
        boxes = store.get_roi(project_id)
        return RoiUpdate(boxes=[RoiBoxModel(**b.to_json()) for b in boxes])

    @app.get("/projects/{project_id}/source")
    def source(project_id: str):
        path = store.project_dir(project_id) / "source.png"
        return FileResponse(path, media_type="image/png")

    @app.post("/projects/{project_id}/train", response_model=JobStarted)
    def train(project_id: str, request: TrainRequest | None = None):
        request = request or TrainRequest()
        store.project_dir(project_id)
        status = store.get_status(project_id)["status"]
        if status == "trained":
            raise ProjectStateError("project is already trained")
        if store.is_training(project_id):
            raise ProjectStateError("training already running for this project")
        overrides: dict = {
            "seed": request.seed,
            "ablation": AblationFlags.preset(request.ablation),
        }
        if request.iters_per_scale is not None:
            overrides["iters_per_scale"] = request.iters_per_scale
        if request.base_channels is not None:
            overrides["base_channels"] = request.base_channels
        config = TrainConfig.profile(request.profile, **overrides)

        def job():
            try:
                store.train(project_id, config)
            except Exception:
                pass  # status file carries the failure reason

        thread = threading.Thread(target=job, name=f"train-{project_id}", daemon=True)
        thread.start()
        return JobStarted(job_id=project_id)

    @app.get("/projects/{project_id}/status", response_model=StatusResponse)
    def status(project_id: str):
        return StatusResponse(**store.get_status(project_id))

    @app.post("/projects/{project_id}/generate", response_model=SampleList)
    def generate(project_id: str, request: GenerateRequest | None = None):
        request = request or GenerateRequest()
        records = store.generate(
            project_id, count=request.count, seed=request.seed, band_px=request.band_px
        )
        return SampleList(samples=[_sample_model(r) for r in records])

    @app.post("/projects/{project_id}/edit", response_model=SampleModel)
    async def edit(
        project_id: str,
        file: UploadFile = File(...),
        seed: int = Form(default=0),
        band_px: int = Form(default=3),
        guide_min_scale: int = Form(default=0),
    ):
        arr = _decode_upload(await file.read())
        record = store.edit(
            project_id, arr, seed=seed, band_px=band_px, guide_min_scale=guide_min_scale
        )
        return _sample_model(record)

    @app.post("/projects/{project_id}/animate", response_model=AnimationResponse)
    def animate(project_id: str, request: AnimateRequest | None = None):
        request = request or AnimateRequest()
        records, manifest = store.animate(
            project_id,
            kind=request.kind,
            frames=request.frames,
            level_max=request.level_max,
            fps=request.fps,
            seed=request.seed,
            band_px=request.band_px,
        )
        return AnimationResponse(
            frames=[_sample_model(r) for r in records],
            fps=request.fps,
            manifest=str(manifest),
        )

    @app.get("/samples/{sample_id}")
    def sample(sample_id: str):
        record = store.get_sample(sample_id)
        return FileResponse(record.path, media_type="image/png")

    @app.get("/projects/{project_id}/metrics", response_model=list[MetricsModel])
    def metrics(project_id: str, samples: int = 8, seed: int = 0):
        reports = store.evaluate(project_id, num_samples=samples, seed=seed)
        return [MetricsModel(**r.to_json()) for r in reports]

    return app


def response_schemas() -> dict:
    """JSON schemas of every response model, keyed by name (shipped in docs)."""
    models = [
        ProjectCreated,
        RoiStored,
        JobStarted,
        StatusResponse,
        SampleModel,
        SampleList,
        AnimationResponse,
        MetricsModel,
    ]
    return {model.__name__: model.model_json_schema() for model in models}
