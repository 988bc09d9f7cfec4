import os
from pathlib import Path
from typing import List, Optional
from pydantic import BaseModel, Field, model_validator
from dotenv import load_dotenv

# Load environment variables from .env file if present
load_dotenv()


class Settings(BaseModel):
    # Environment
    ENVIRONMENT: str = os.getenv("ENVIRONMENT", "development")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # API settings
    API_V1_STR: str = "/api/v1"
    PROJECT_NAME: str = "Distort Forge"

    # CORS settings
    CORS_ORIGINS: List[str] = os.getenv("CORS_ORIGINS", "*").split(",")

    # Upload cap for preview requests
    MAX_FILE_SIZE: int = int(os.getenv("MAX_FILE_SIZE", 20 * 1024 * 1024))  # 20MB default

    # Job database and preview scratch space
    TEMP_DIR: str = os.getenv("TEMP_DIR", os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "tmp"))

    # Generation settings
    DISTORT_FORGE_SEED: int = int(os.getenv("DISTORT_FORGE_SEED", 0))
    DEFAULT_JOBS: int = int(os.getenv("DEFAULT_JOBS", 1))

    # Optional override files for the built-in tables
    PROFILES_PATH: Optional[str] = os.getenv("PROFILES_PATH") or None
    ACTIVITY_MAP_PATH: Optional[str] = os.getenv("ACTIVITY_MAP_PATH") or None


settings = Settings()


class RunConfig(BaseModel):
    """Paths and knobs of one batch run."""
    images_dir: Path
    out_dir: Path
    depth_dir: Optional[Path] = None
    annotations: Optional[Path] = None
    scene_index: Optional[Path] = None
    rain_masks: Optional[Path] = None
    fog_masks: Optional[Path] = None
    global_seed: int = Field(default_factory=lambda: settings.DISTORT_FORGE_SEED, ge=0, lt=2**64)
    jobs: int = Field(default_factory=lambda: settings.DEFAULT_JOBS, ge=1)
    depth_convention: str = Field("nearness", pattern="^(nearness|farness)$")
    overwrite: bool = False

    @model_validator(mode="after")
    def _check_output_dir(self) -> "RunConfig":
        out = self.out_dir.resolve()
        for name in ("images_dir", "depth_dir"):
            source = getattr(self, name)
            if source is not None and source.resolve() == out:
                raise ValueError(f"output dir must differ from {name}: {source}")
        return self
