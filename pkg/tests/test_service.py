import io
import json
import time
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image as PILImage

from conftest import make_toy_image

from mogan.project import ProjectStore
from mogan.service import create_app

SCHEMA = json.loads((Path(__file__).parent.parent / "docs" / "api_schema.json").read_text())


def validate(payload, model_name):
    jsonschema.validate(payload, SCHEMA["models"][model_name])


def png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray((image * 255).astype(np.uint8), "RGB").save(buf, "PNG")
    return buf.getvalue()


@pytest.fixture()
def client(tmp_path):
    store = ProjectStore(tmp_path / "store")
    with TestClient(create_app(store)) as c:
        c.store = store
        yield c


def upload_project(client, size=33):
    resp = client.post(
        "/projects", files={"file": ("toy.png", png_bytes(make_toy_image(size)), "image/png")}
    )
    assert resp.status_code == 200, resp.text
    validate(resp.json(), "ProjectCreated")
    return resp.json()["id"]


def set_roi(client, pid, boxes=((3, 3, 29, 29),)):
    body = {
        "boxes": [
            {"x_min": b[0], "y_min": b[1], "x_max": b[2], "y_max": b[3]} for b in boxes
        ]
    }
    resp = client.put(f"/projects/{pid}/roi", json=body)
    assert resp.status_code == 200, resp.text
    validate(resp.json(), "RoiStored")
    return resp


def train_and_wait(client, pid, timeout=180.0, **overrides):
    body = {"profile": "desk", "iters_per_scale": 3, "base_channels": 8, "seed": 5}
    body.update(overrides)
    resp = client.post(f"/projects/{pid}/train", json=body)
    assert resp.status_code == 200, resp.text
    validate(resp.json(), "JobStarted")
    statuses = []
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/projects/{pid}/status").json()
        statuses.append(status)
        if status["status"] in ("trained", "failed"):
            break
        time.sleep(0.2)
    assert statuses[-1]["status"] == "trained", statuses[-1]
    return statuses


class TestLifecycle:
    def test_full_lifecycle_upload_to_samples(self, client):
        pid = upload_project(client)
        set_roi(client, pid)
        statuses = train_and_wait(client, pid)
        for status in statuses:
            validate(status, "StatusResponse")

        resp = client.post(f"/projects/{pid}/generate", json={"count": 2, "seed": 3})
        assert resp.status_code == 200, resp.text
        payload = resp.json()
        validate(payload, "SampleList")
        assert len(payload["samples"]) == 2

        sample_id = payload["samples"][0]["id"]
        raw = client.get(f"/samples/{sample_id}")
        assert raw.status_code == 200
        assert raw.content == Path(payload["samples"][0]["path"]).read_bytes()
        img = PILImage.open(io.BytesIO(raw.content))
        assert img.size == (33, 33)

    def test_progress_tuple_non_decreasing(self, client):
        pid = upload_project(client)
        set_roi(client, pid)
        statuses = train_and_wait(client, pid, iters_per_scale=6)
        seen = [
            (s["scale"], s["step"])
            for s in statuses
            if s["status"] == "training" and s.get("scale") is not None
        ]
        assert seen, "no training statuses observed"
        assert seen == sorted(seen)

    def test_second_concurrent_train_conflicts(self, client):
        pid = upload_project(client)
        set_roi(client, pid)
        first = client.post(
            f"/projects/{pid}/train",
            json={"profile": "desk", "iters_per_scale": 40, "base_channels": 8},
        )
        assert first.status_code == 200
        second = client.post(
            f"/projects/{pid}/train",
            json={"profile": "desk", "iters_per_scale": 40, "base_channels": 8},
        )
        assert second.status_code == 409
        # wait for completion so the tmp dir can be torn down cleanly
        deadline = time.time() + 180
        while time.time() < deadline:
            if client.get(f"/projects/{pid}/status").json()["status"] in ("trained", "failed"):
                break
            time.sleep(0.2)

    def test_retrain_after_trained_conflicts(self, client):
        pid = upload_project(client)
        set_roi(client, pid)
        train_and_wait(client, pid)
        resp = client.post(f"/projects/{pid}/train", json={"profile": "desk"})
        assert resp.status_code == 409

    def test_edit_and_animate_endpoints(self, client):
        pid = upload_project(client)
        set_roi(client, pid)
        train_and_wait(client, pid)

        edited = make_toy_image(33).copy()
        edited[4:9, 4:9] = edited[12:17, 12:17]
        resp = client.post(
            f"/projects/{pid}/edit",
            files={"file": ("edit.png", png_bytes(edited), "image/png")},
            data={"seed": "7"},
        )
        assert resp.status_code == 200, resp.text
        validate(resp.json(), "SampleModel")
        assert resp.json()["kind"] == "edit"

        resp = client.post(
            f"/projects/{pid}/animate",
            json={"kind": "rotation", "frames": 3, "level_max": 0.5, "fps": 8},
        )
        assert resp.status_code == 200, resp.text
        payload = resp.json()
        validate(payload, "AnimationResponse")
        assert len(payload["frames"]) == 3
        frame = client.get(f"/samples/{payload['frames'][0]['id']}")
        assert frame.status_code == 200

    def test_metrics_endpoint(self, client):
        pid = upload_project(client)
        set_roi(client, pid)
        train_and_wait(client, pid)
        resp = client.get(f"/projects/{pid}/metrics", params={"samples": 2})
        assert resp.status_code == 200, resp.text
        reports = resp.json()
        assert {r["target"] for r in reports} == {"whole", "roi_only", "background_only"}
        for report in reports:
            validate(report, "MetricsModel")


class TestErrors:
    def test_unknown_project_404(self, client):
        assert client.get("/projects/zzz/status").status_code == 404
        assert client.post("/projects/zzz/generate", json={}).status_code == 404
        assert client.get("/samples/zzz-123").status_code == 404

    def test_validation_422(self, client):
        pid = upload_project(client)
        resp = client.put(
            f"/projects/{pid}/roi",
            json={"boxes": [
                {"x_min": 0, "y_min": 0, "x_max": 20, "y_max": 20},
                {"x_min": 10, "y_min": 10, "x_max": 30, "y_max": 30},
            ]},
        )
        assert resp.status_code == 422  # overlapping boxes
        resp = client.post(f"/projects/{pid}/generate", json={"count": -1})
        assert resp.status_code == 422
        resp = client.post(
            "/projects", files={"file": ("bad.png", b"not a png", "image/png")}
        )
        assert resp.status_code == 422

    def test_generate_before_training_409(self, client):
        pid = upload_project(client)
        resp = client.post(f"/projects/{pid}/generate", json={"count": 1})
        assert resp.status_code == 409
