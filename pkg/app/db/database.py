"""
Database module for apply jobs submitted over HTTP.
Provides functions for working with SQLite database.
"""

import os
import sqlite3
import json
from datetime import datetime
import logging
from typing import Dict, Any, Optional
from app.core.config import settings
from app.models.distortion import JobStatus

logger = logging.getLogger(__name__)

# Define database path
DB_PATH = os.path.join(settings.TEMP_DIR, 'jobs.db')


def _connect() -> sqlite3.Connection:
    os.makedirs(os.path.dirname(DB_PATH), exist_ok=True)
    return sqlite3.connect(DB_PATH)


def init_db():
    """Initialize the database and create required tables."""
    conn = None
    try:
        conn = _connect()
        cursor = conn.cursor()

        cursor.execute('''
        CREATE TABLE IF NOT EXISTS apply_jobs (
            job_id TEXT PRIMARY KEY,
            status TEXT NOT NULL,
            created_at TEXT NOT NULL,
            updated_at TEXT NOT NULL,
            request TEXT NOT NULL,
            progress REAL DEFAULT 0.0,
            succeeded INTEGER DEFAULT 0,
            failed INTEGER DEFAULT 0,
            total INTEGER DEFAULT 0,
            error_message TEXT,
            report_path TEXT
        )
        ''')

        conn.commit()
        logger.info("Database initialized successfully")
    except Exception as e:
        logger.error(f"Error initializing database: {str(e)}")
    finally:
        if conn:
            conn.close()


def save_job(job: Dict[str, Any]):
    """
    Insert a new job.

    Args:
        job: Dictionary with job_id, status, created_at, updated_at and request
    """
    conn = None
    try:
        conn = _connect()
        cursor = conn.cursor()
        cursor.execute('''
        INSERT INTO apply_jobs (job_id, status, created_at, updated_at, request, progress, total)
        VALUES (?, ?, ?, ?, ?, ?, ?)
        ''', (
            job['job_id'],
            JobStatus(job['status']).value,
            job['created_at'].isoformat(),
            job['updated_at'].isoformat(),
            json.dumps(job['request']),
            job.get('progress', 0.0),
            job.get('total', 0),
        ))
        conn.commit()
    except Exception as e:
        logger.error(f"Error saving job to database: {str(e)}")
    finally:
        if conn:
            conn.close()


def get_job(job_id: str) -> Optional[Dict[str, Any]]:
    """
    Get a job from the database.

    Args:
        job_id: ID of the job to retrieve

    Returns:
        Dictionary containing job information or None if not found
    """
    conn = None
    try:
        conn = _connect()
        conn.row_factory = sqlite3.Row
        cursor = conn.cursor()
        cursor.execute("SELECT * FROM apply_jobs WHERE job_id = ?", (job_id,))
        row = cursor.fetchone()
        if row is None:
            return None
        job = dict(row)
        job['status'] = JobStatus(job['status'])
        job['created_at'] = datetime.fromisoformat(job['created_at'])
        job['updated_at'] = datetime.fromisoformat(job['updated_at'])
        job['request'] = json.loads(job['request'])
        return job
    except Exception as e:
        logger.error(f"Error getting job from database: {str(e)}")
        return None
    finally:
        if conn:
            conn.close()


def update_job(job_id: str, status: Optional[JobStatus] = None, **fields):
    """
    Update a job's status and counters.

    Args:
        job_id: ID of the job to update
        status: New status; unchanged when None
        fields: Any of progress, succeeded, failed, total, error_message, report_path
    """
    allowed = {"progress", "succeeded", "failed", "total", "error_message", "report_path"}
    unknown = set(fields) - allowed
    if unknown:
        raise ValueError(f"unknown job fields: {sorted(unknown)}")

    conn = None
    try:
        conn = _connect()
        cursor = conn.cursor()
        query = "UPDATE apply_jobs SET updated_at = ?"
        params = [datetime.now().isoformat()]
        if status is not None:
            query += ", status = ?"
            params.append(JobStatus(status).value)
        for name, value in fields.items():
            if value is not None:
                query += f", {name} = ?"
                params.append(value)
        query += " WHERE job_id = ?"
        params.append(job_id)
        cursor.execute(query, params)
        conn.commit()
    except Exception as e:
        logger.error(f"Error updating job {job_id}: {str(e)}")
    finally:
        if conn:
            conn.close()


def start_job(job_id: str, total: int) -> bool:
    """
    Move a pending job to processing.

    Returns:
        False when the job is no longer pending (e.g. cancelled meanwhile)
    """
    conn = None
    try:
        conn = _connect()
        cursor = conn.cursor()
        cursor.execute(
            "UPDATE apply_jobs SET status = ?, total = ?, updated_at = ? WHERE job_id = ? AND status = ?",
            (JobStatus.PROCESSING.value, total, datetime.now().isoformat(), job_id, JobStatus.PENDING.value),
        )
        conn.commit()
        return cursor.rowcount == 1
    except Exception as e:
        logger.error(f"Error starting job {job_id}: {str(e)}")
        return False
    finally:
        if conn:
            conn.close()
