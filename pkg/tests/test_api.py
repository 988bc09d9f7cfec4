import io
import os
from datetime import datetime

import pytest
from fastapi.testclient import TestClient
from PIL import Image

from app.api.endpoints import process_job
from app.cli import main as cli_main
from app.db import database
from app.main import app
from app.models.distortion import JobStatus, RunRequest


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setattr(database, "DB_PATH", str(tmp_path / "jobs.db"))
    database.init_db()
    with TestClient(app) as c:
        yield c


def _image_upload(corpus, image_id=1):
    name = f"{image_id:012d}.png"
    with open(os.path.join(corpus["images"], name), "rb") as f:
        return name, f.read(), "image/png"


def _depth_upload(corpus, image_id=1):
    name = f"{image_id:012d}.png"
    with open(os.path.join(corpus["depth"], name), "rb") as f:
        return name, f.read(), "image/png"


def _annotations_upload(corpus):
    with open(corpus["annotations"], "rb") as f:
        return "instances.json", f.read(), "application/json"


def test_health(client):
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_list_distortions(client):
    response = client.get("/api/v1/distortion")
    assert response.status_code == 200
    kinds = {item["kind"]: item for item in response.json()}
    assert len(kinds) == 10
    assert kinds["fog"]["group"] == "atmospheric"
    assert kinds["fog"]["requires"] == ["depth"]
    assert kinds["local_defocus"]["requires"] == ["depth", "annotations"]
    assert kinds["gaussian_noise"]["requires"] == []


def test_preview_global(client, corpus):
    response = client.post(
        "/api/v1/distortion/preview",
        files={"image": _image_upload(corpus)},
        data={"kind": "compression_artifact", "level": "5"},
    )
    assert response.status_code == 200
    assert response.headers["content-type"] == "image/png"
    assert Image.open(io.BytesIO(response.content)).size == (128, 48)


def test_preview_local_matches_annotations_by_file_name(client, corpus):
    response = client.post(
        "/api/v1/distortion/preview",
        files={
            "image": _image_upload(corpus),
            "depth": _depth_upload(corpus),
            "annotations": _annotations_upload(corpus),
        },
        data={"kind": "local_motion_blur", "seed": "4"},
    )
    assert response.status_code == 200
    assert Image.open(io.BytesIO(response.content)).size == (4 * 64, 48)


def test_preview_with_explicit_params(client, corpus):
    response = client.post(
        "/api/v1/distortion/preview",
        files={"image": _image_upload(corpus), "depth": _depth_upload(corpus)},
        data={"kind": "rain", "params": '{"alpha": 0.9, "angle": 80, "density": 1500}'},
    )
    assert response.status_code == 200


def test_preview_missing_depth(client, corpus):
    response = client.post(
        "/api/v1/distortion/preview",
        files={"image": _image_upload(corpus)},
        data={"kind": "fog"},
    )
    assert response.status_code == 400
    assert "depth" in response.json()["detail"]


def test_preview_unknown_kind(client, corpus):
    response = client.post(
        "/api/v1/distortion/preview",
        files={"image": _image_upload(corpus)},
        data={"kind": "hail"},
    )
    assert response.status_code == 422


def test_job_runs_to_completion(client, corpus, tmp_path):
    manifest = str(tmp_path / "manifest.json")
    assert cli_main([
        "plan", "--images", corpus["images"], "--annotations", corpus["annotations"],
        "--depth", corpus["depth"], "--scene-index", corpus["scene_index"], "--out", manifest,
    ]) == 0
    request = {
        "manifest": manifest,
        "images_dir": corpus["images"],
        "out_dir": str(tmp_path / "out"),
        "depth_dir": corpus["depth"],
        "annotations": corpus["annotations"],
        "jobs": 2,
    }
    response = client.post("/api/v1/distortion/jobs", json=request)
    assert response.status_code == 200
    job_id = response.json()["job_id"]

    status = client.get(f"/api/v1/distortion/jobs/{job_id}").json()
    assert status["status"] == JobStatus.COMPLETED.value
    assert status["succeeded"] == corpus["count"] and status["failed"] == 0
    assert status["progress"] == 100.0

    report = client.get(status["report_url"])
    assert report.status_code == 200
    assert report.json()["total"] == corpus["count"]

    assert client.delete(f"/api/v1/distortion/jobs/{job_id}").status_code == 400


def test_job_with_missing_manifest(client, corpus, tmp_path):
    request = {"manifest": str(tmp_path / "none.json"), "images_dir": corpus["images"], "out_dir": str(tmp_path / "out")}
    assert client.post("/api/v1/distortion/jobs", json=request).status_code == 400


def test_job_with_invalid_config_fails(client, corpus, tmp_path):
    manifest = tmp_path / "manifest.json"
    manifest.write_text("{}")
    request = {"manifest": str(manifest), "images_dir": corpus["images"], "out_dir": str(tmp_path / "out")}
    job_id = client.post("/api/v1/distortion/jobs", json=request).json()["job_id"]
    status = client.get(f"/api/v1/distortion/jobs/{job_id}").json()
    assert status["status"] == JobStatus.FAILED.value
    assert status["message"]


def test_unknown_job(client):
    assert client.get("/api/v1/distortion/jobs/nope").status_code == 404
    assert client.get("/api/v1/distortion/jobs/nope/report").status_code == 404
    assert client.delete("/api/v1/distortion/jobs/nope").status_code == 404


def _pending_job(job_id, request):
    now = datetime.now()
    database.save_job({"job_id": job_id, "status": JobStatus.PENDING, "created_at": now, "updated_at": now, "request": request})


def test_start_job_only_moves_pending_jobs(client):
    _pending_job("a", {})
    assert database.start_job("a", 3)
    job = database.get_job("a")
    assert job["status"] == JobStatus.PROCESSING and job["total"] == 3
    assert not database.start_job("a", 3)

    _pending_job("b", {})
    database.update_job("b", JobStatus.CANCELLED)
    assert not database.start_job("b", 3)
    assert database.get_job("b")["status"] == JobStatus.CANCELLED


def test_job_cancelled_before_start_stays_cancelled(client, corpus, tmp_path, monkeypatch):
    manifest = str(tmp_path / "manifest.json")
    assert cli_main(["plan", "--images", corpus["images"], "--annotations", corpus["annotations"], "--out", manifest]) == 0
    out = tmp_path / "out"
    request = RunRequest(manifest=manifest, images_dir=corpus["images"], out_dir=str(out), annotations=corpus["annotations"])
    _pending_job("late", request.model_dump())

    real = process_job.load_manifest

    def cancel_then_load(path):
        database.update_job("late", JobStatus.CANCELLED)
        return real(path)

    monkeypatch.setattr(process_job, "load_manifest", cancel_then_load)
    process_job.run_job("late", request)
    assert database.get_job("late")["status"] == JobStatus.CANCELLED
    assert not out.exists()
