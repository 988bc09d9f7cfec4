"""
Superclass motion profiles: per COCO supercategory, the motion magnitude
interval, the orientation policy and the rank in the interaction hierarchy.
"""

import json
import logging
from enum import Enum
from typing import Dict, Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from app.core.config import settings
from app.core.errors import ParameterError

logger = logging.getLogger(__name__)


class AnglePolicy(str, Enum):
    FREE = "free"
    SNAP_HORIZONTAL = "snap_horizontal"
    SNAP_TO_ELLIPSE = "snap_to_ellipse"


class SuperclassProfile(BaseModel):
    name: str
    lo: float = Field(ge=0)
    hi: float = Field(ge=0)
    rank: int
    angle_policy: AnglePolicy = AnglePolicy.FREE

    @model_validator(mode="after")
    def _check_interval(self) -> "SuperclassProfile":
        if self.lo > self.hi:
            raise ValueError(f"profile {self.name}: lo {self.lo} exceeds hi {self.hi}")
        return self

    @property
    def is_static(self) -> bool:
        return self.hi == 0


STATIC = "static"

_DEFAULT_TABLE = {
    "vehicle": (7, 15, 5, AnglePolicy.SNAP_HORIZONTAL),
    "animal": (4, 10, 4, AnglePolicy.SNAP_HORIZONTAL),
    "person": (3, 8, 3, AnglePolicy.SNAP_TO_ELLIPSE),
    "sports": (3, 10, 2, AnglePolicy.FREE),
    "accessory": (0, 5, 1, AnglePolicy.SNAP_TO_ELLIPSE),
    "food": (0, 0, 0, AnglePolicy.FREE),
    "furniture": (0, 0, 0, AnglePolicy.FREE),
    "appliance": (0, 0, 0, AnglePolicy.FREE),
    "electronic": (0, 0, 0, AnglePolicy.FREE),
    "indoor": (0, 0, 0, AnglePolicy.FREE),
    "outdoor": (0, 0, 0, AnglePolicy.FREE),
    "kitchen": (0, 0, 0, AnglePolicy.FREE),
    STATIC: (0, 0, 0, AnglePolicy.FREE),
}


class ProfileTable:
    """Total mapping supercategory -> profile; unknown names fall to the static profile."""

    def __init__(self, profiles: Dict[str, SuperclassProfile]):
        if STATIC not in profiles:
            raise ParameterError("profile table needs a 'static' entry")
        self.profiles = profiles

    def __getitem__(self, supercategory: str) -> SuperclassProfile:
        return self.profiles.get(supercategory, self.profiles[STATIC])

    def __iter__(self):
        return iter(self.profiles.values())

    def __len__(self) -> int:
        return len(self.profiles)


def default_profiles() -> Dict[str, SuperclassProfile]:
    return {
        name: SuperclassProfile(name=name, lo=lo, hi=hi, rank=rank, angle_policy=policy)
        for name, (lo, hi, rank, policy) in _DEFAULT_TABLE.items()
    }


def superclass_profiles(path: Optional[str] = None) -> ProfileTable:
    """
    Build the profile table, merging an optional JSON override
    {supercategory: {lo, hi, rank, angle_policy}} over the defaults.

    Args:
        path: Override file; settings.PROFILES_PATH when None
    """
    profiles = default_profiles()
    path = path or settings.PROFILES_PATH
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                overrides = json.load(f)
            if not isinstance(overrides, dict):
                raise ParameterError(f"profile override {path} must be a JSON object")
            for name, values in overrides.items():
                base = profiles.get(name, profiles[STATIC]).model_dump()
                base.update(values, name=name)
                profiles[name] = SuperclassProfile.model_validate(base)
        except (OSError, json.JSONDecodeError, ValidationError, TypeError) as e:
            raise ParameterError(f"cannot load profile override {path}: {e}") from e
        logger.info(f"Loaded superclass profile overrides from {path}")
    return ProfileTable(profiles)
