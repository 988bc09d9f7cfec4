from fastapi import APIRouter, UploadFile, File, Form, HTTPException, BackgroundTasks
from fastapi.responses import Response
from typing import Optional
import os
import json
import uuid
import logging
from datetime import datetime

from app.core.config import settings
from app.core.errors import DistortForgeError, MissingInputError, UsageError
from app.models.distortion import (
    ATMOSPHERIC_KINDS,
    GLOBAL_KINDS,
    KIND_ORDER,
    DistortionKind,
    JobResponse,
    JobStatus,
    JobStatusResponse,
    Locale,
    RunRequest,
)
from app.services.annotations.coco import parse_dataset
from app.services.depth.strata import DepthConvention
from app.services.distortions.pipeline import KIND_INPUTS, missing_inputs
from app.services.imaging.io import encode_png
from app.services.runner import render_preview
from app.db import database
from app.api.endpoints.process_job import process_job

router = APIRouter()
logger = logging.getLogger(__name__)

# Initialize database on import
database.init_db()


def _group(kind: DistortionKind) -> str:
    if kind in GLOBAL_KINDS:
        return "global"
    if kind in ATMOSPHERIC_KINDS:
        return "atmospheric"
    return "local"


async def _read_upload(upload: UploadFile) -> bytes:
    content = await upload.read()
    if len(content) > settings.MAX_FILE_SIZE:
        raise HTTPException(
            status_code=400,
            detail=f"{upload.filename} exceeds the maximum allowed size of {settings.MAX_FILE_SIZE/1024/1024:.1f} MB",
        )
    return content


@router.get("", response_model=list)
async def get_supported_distortions():
    """
    List the distortion kinds.

    Returns:
        Kind, group, required inputs and parameter descriptions for each kind.
    """
    return [
        {
            "kind": kind,
            "group": _group(kind),
            "requires": missing_inputs(kind, has_depth=False, has_annotations=False),
            "parameters": KIND_INPUTS[kind],
        }
        for kind in KIND_ORDER
    ]


@router.post("/preview")
async def preview_distortion(
    image: UploadFile = File(...),
    kind: DistortionKind = Form(...),
    depth: Optional[UploadFile] = File(None),
    annotations: Optional[UploadFile] = File(None),
    image_id: Optional[int] = Form(None),
    level: Optional[int] = Form(None, ge=1, le=5),
    seed: int = Form(0, ge=0, lt=2**64),
    params: Optional[str] = Form(None),
    depth_convention: DepthConvention = Form(DepthConvention.NEARNESS),
    locale: Locale = Form(Locale.OUTDOOR),
):
    """
    Render one distortion side by side with the original.

    - **image**: The image to distort
    - **kind**: Distortion kind
    - **depth**: Optional. Depth map (required by fog, rain and local defocus)
    - **annotations**: Optional. COCO JSON holding the image's objects (required by local kinds)
    - **image_id**: Optional. Image id inside the annotations; matched by file name when absent
    - **level**, **params**: Optional. Drawn from the seed when absent

    Returns a PNG: original | distorted, plus mask and depth panels for local kinds.
    """
    image_bytes = await _read_upload(image)
    depth_bytes = await _read_upload(depth) if depth is not None else None

    try:
        ann = None
        if annotations is not None:
            dataset = parse_dataset(await _read_upload(annotations))
            if image_id is not None:
                ann = dataset.images.get(image_id)
            else:
                ann = next((a for a in dataset if a.file_name == image.filename), None)
                if ann is None and len(dataset) == 1:
                    ann = next(iter(dataset))
            if ann is None:
                raise UsageError(f"no annotations for {image.filename}")

        extra = json.loads(params) if params else None
        if extra is not None and not isinstance(extra, dict):
            raise UsageError("params must be a JSON object")

        preview = render_preview(
            kind,
            image_bytes,
            depth=depth_bytes,
            depth_name=depth.filename if depth is not None else None,
            annotations=ann,
            level=level,
            params=extra,
            seed=seed,
            convention=depth_convention,
            locale=locale,
        )
    except (UsageError, MissingInputError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    except (DistortForgeError, json.JSONDecodeError) as e:
        logger.error(f"Preview of {kind.value} failed: {str(e)}")
        raise HTTPException(status_code=400, detail=str(e))

    return Response(content=encode_png(preview), media_type="image/png")


@router.post("/jobs", response_model=JobResponse)
async def start_job(request: RunRequest, background_tasks: BackgroundTasks):
    """
    Start applying a manifest to a corpus on the server.

    Returns a job ID for tracking progress.
    """
    if not os.path.isfile(request.manifest):
        raise HTTPException(status_code=400, detail=f"Manifest not found: {request.manifest}")

    job_id = str(uuid.uuid4())
    now = datetime.now()
    database.save_job({
        "job_id": job_id,
        "status": JobStatus.PENDING,
        "created_at": now,
        "updated_at": now,
        "request": request.model_dump(),
    })
    background_tasks.add_task(process_job, job_id=job_id, request=request)
    return {"job_id": job_id, "status": JobStatus.PENDING}


@router.get("/jobs/{job_id}", response_model=JobStatusResponse)
async def get_job_status(job_id: str):
    """
    Check the status of an apply job.

    - **job_id**: The ID of the job
    """
    job = database.get_job(job_id)
    if job is None:
        raise HTTPException(status_code=404, detail="Job not found")

    return {
        "job_id": job_id,
        "status": job["status"],
        "progress": job["progress"],
        "succeeded": job["succeeded"],
        "failed": job["failed"],
        "total": job["total"],
        "message": job.get("error_message"),
        "report_url": f"{settings.API_V1_STR}/distortion/jobs/{job_id}/report" if job.get("report_path") else None,
        "created_at": job["created_at"],
        "updated_at": job["updated_at"],
    }


@router.get("/jobs/{job_id}/report")
async def get_job_report(job_id: str):
    """Run report of a finished job."""
    job = database.get_job(job_id)
    if job is None:
        raise HTTPException(status_code=404, detail="Job not found")
    path = job.get("report_path")
    if not path or not os.path.exists(path):
        raise HTTPException(status_code=404, detail="Report not available yet")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


@router.delete("/jobs/{job_id}")
async def cancel_job(job_id: str):
    """
    Cancel an apply job; entries not yet started are skipped.

    - **job_id**: The ID of the job to cancel
    """
    job = database.get_job(job_id)
    if job is None:
        raise HTTPException(status_code=404, detail="Job not found")
    if job["status"] in [JobStatus.COMPLETED, JobStatus.FAILED, JobStatus.CANCELLED]:
        raise HTTPException(status_code=400, detail=f"Job already {job['status'].value}")

    database.update_job(job_id, JobStatus.CANCELLED)
    return {"job_id": job_id, "status": JobStatus.CANCELLED}
