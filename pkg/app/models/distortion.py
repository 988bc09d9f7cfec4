from pydantic import BaseModel, ConfigDict, Field
from enum import Enum
from typing import Optional, List, Dict, Any, FrozenSet
from datetime import datetime


class DistortionKind(str, Enum):
    """The ten distortion types, in the fixed tie-break order of the distribution table."""
    COMPRESSION_ARTIFACT = "compression_artifact"
    CONTRAST_CHANGE = "contrast_change"
    GAUSSIAN_NOISE = "gaussian_noise"
    GLOBAL_MOTION_BLUR = "global_motion_blur"
    GLOBAL_DEFOCUS_BLUR = "global_defocus_blur"
    FOG = "fog"
    RAIN = "rain"
    LOCAL_BACKLIGHT = "local_backlight"
    LOCAL_DEFOCUS = "local_defocus"
    LOCAL_MOTION_BLUR = "local_motion_blur"


GLOBAL_KINDS = (
    DistortionKind.COMPRESSION_ARTIFACT,
    DistortionKind.CONTRAST_CHANGE,
    DistortionKind.GAUSSIAN_NOISE,
    DistortionKind.GLOBAL_MOTION_BLUR,
    DistortionKind.GLOBAL_DEFOCUS_BLUR,
)
ATMOSPHERIC_KINDS = (DistortionKind.FOG, DistortionKind.RAIN)
LOCAL_KINDS = (
    DistortionKind.LOCAL_BACKLIGHT,
    DistortionKind.LOCAL_DEFOCUS,
    DistortionKind.LOCAL_MOTION_BLUR,
)
KIND_ORDER = list(DistortionKind)


class Locale(str, Enum):
    INDOOR = "indoor"
    OUTDOOR = "outdoor"


class Activity(str, Enum):
    SKI = "ski"
    SURF = "surf"
    SKATE = "skate"
    SPORT = "sport"
    RIDING = "riding"


class ContrastDirection(str, Enum):
    INCREASE = "increase"
    DECREASE = "decrease"


class SceneContext(BaseModel):
    """Locale plus the activity tags found in the image."""
    model_config = ConfigDict(frozen=True)
    locale: Locale = Locale.OUTDOOR
    activities: FrozenSet[Activity] = frozenset()


class CorpusImage(BaseModel):
    """What the planner knows about one image."""
    model_config = ConfigDict(frozen=True)
    image_id: int
    file_name: str = ""
    scene: SceneContext = SceneContext()
    has_depth: bool = False
    applicable: FrozenSet[DistortionKind] = frozenset()


class DistortionSpec(BaseModel):
    """One distortion with its parameters and per-image seed."""
    kind: DistortionKind
    level: Optional[int] = Field(None, ge=1, le=5, description="Intensity level for global kinds (1-5)")
    params: Dict[str, Any] = Field(default_factory=dict)
    seed: int = Field(ge=0, lt=2**64)


class ManifestEntry(DistortionSpec):
    image_id: int
    file_name: str = ""


class KindSummary(BaseModel):
    kind: DistortionKind
    target_ratio: float
    target_count: float
    count: int
    achieved_ratio: float
    shortfall: float = Field(0.0, description="Target images the corpus could not absorb for this kind")


class PlanSummary(BaseModel):
    total: int
    kinds: List[KindSummary]
    scenes: Dict[str, int] = Field(default_factory=dict)


class Manifest(BaseModel):
    global_seed: int = Field(ge=0, lt=2**64)
    ratios: Dict[DistortionKind, float]
    entries: List[ManifestEntry]
    summary: PlanSummary


class Violation(BaseModel):
    code: str
    message: str
    image_id: Optional[int] = None


class ValidationReport(BaseModel):
    ok: bool
    checked: int
    violations: List[Violation] = Field(default_factory=list)
    deviations: Dict[DistortionKind, float] = Field(default_factory=dict)


class EntryStatus(str, Enum):
    """Outcome of one manifest entry in an apply run."""
    COMPLETED = "completed"
    FAILED = "failed"


class EntryResult(BaseModel):
    image_id: int
    file_name: str
    kind: DistortionKind
    status: EntryStatus
    seconds: float = 0.0
    output: Optional[str] = None
    error_message: Optional[str] = None


class RunReport(BaseModel):
    total: int
    succeeded: int
    failed: int
    jobs: int
    seconds: float
    entries: List[EntryResult]


class JobStatus(str, Enum):
    """Possible statuses for an apply job submitted over HTTP."""
    PENDING = "pending"
    PROCESSING = "processing"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELLED = "cancelled"


class RunRequest(BaseModel):
    """Request model for starting an apply job; paths are local to the server."""
    manifest: str
    images_dir: str
    out_dir: str
    depth_dir: Optional[str] = None
    annotations: Optional[str] = None
    scene_index: Optional[str] = None
    rain_masks: Optional[str] = None
    fog_masks: Optional[str] = None
    depth_convention: str = Field("nearness", pattern="^(nearness|farness)$")
    jobs: int = Field(1, ge=1, le=64)
    overwrite: bool = False


class JobResponse(BaseModel):
    job_id: str
    status: JobStatus = JobStatus.PENDING
    message: Optional[str] = None


class JobStatusResponse(BaseModel):
    job_id: str
    status: JobStatus
    progress: float = Field(0.0, ge=0.0, le=100.0)
    succeeded: int = 0
    failed: int = 0
    total: int = 0
    message: Optional[str] = None
    report_url: Optional[str] = None
    created_at: Optional[datetime] = None
    updated_at: Optional[datetime] = None
