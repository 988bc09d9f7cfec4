"""
Background execution of apply jobs.
Runs the batch in a worker thread and mirrors its progress into the job store.
"""

import os
import asyncio
import logging

from pydantic import ValidationError

from app.core.config import RunConfig
from app.core.errors import DistortForgeError
from app.db import database
from app.models.distortion import EntryResult, EntryStatus, JobStatus, RunRequest
from app.services.runner import load_manifest, run_apply
from app.utils.file_handling import REPORT_FILE

logger = logging.getLogger(__name__)


def is_cancelled(job_id: str) -> bool:
    job = database.get_job(job_id)
    return job is not None and job["status"] == JobStatus.CANCELLED


def run_job(job_id: str, request: RunRequest):
    """Blocking body of an apply job."""
    if is_cancelled(job_id):
        logger.info(f"Job {job_id} cancelled before it started")
        return
    try:
        config = RunConfig(
            images_dir=request.images_dir,
            out_dir=request.out_dir,
            depth_dir=request.depth_dir,
            annotations=request.annotations,
            scene_index=request.scene_index,
            rain_masks=request.rain_masks,
            fog_masks=request.fog_masks,
            jobs=request.jobs,
            depth_convention=request.depth_convention,
            overwrite=request.overwrite,
        )
        manifest = load_manifest(request.manifest)
    except (ValidationError, DistortForgeError) as e:
        logger.error(f"Job {job_id} rejected: {e}")
        database.update_job(job_id, JobStatus.FAILED, error_message=str(e))
        return

    total = len(manifest.entries)
    if not database.start_job(job_id, total):
        logger.info(f"Job {job_id} is no longer pending; not starting it")
        return

    counts = {"succeeded": 0, "failed": 0}

    def progress(done: int, total: int, result: EntryResult):
        counts["succeeded" if result.status is EntryStatus.COMPLETED else "failed"] += 1
        database.update_job(job_id, progress=100.0 * done / total, **counts)

    report = run_apply(manifest, config, progress=progress, cancelled=lambda: is_cancelled(job_id))
    report_path = os.path.join(str(config.out_dir), REPORT_FILE)
    if is_cancelled(job_id):
        database.update_job(job_id, succeeded=report.succeeded, failed=report.failed, report_path=report_path)
        logger.info(f"Job {job_id} cancelled after {report.succeeded} entries")
        return
    status = JobStatus.COMPLETED if report.succeeded > 0 else JobStatus.FAILED
    database.update_job(
        job_id,
        status,
        progress=100.0,
        succeeded=report.succeeded,
        failed=report.failed,
        report_path=report_path,
        error_message=None if status is JobStatus.COMPLETED else "every entry failed",
    )
    logger.info(f"Job {job_id} finished: {report.succeeded}/{report.total} succeeded")


async def process_job(job_id: str, request: RunRequest):
    """
    Process an apply job in the background.

    Args:
        job_id: ID of the job
        request: Paths and options of the run
    """
    try:
        await asyncio.to_thread(run_job, job_id, request)
    except Exception as e:
        logger.error(f"Error processing job {job_id}: {str(e)}")
        database.update_job(job_id, JobStatus.FAILED, error_message=str(e))
