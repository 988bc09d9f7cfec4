"""
Where rain and fog masks come from: procedural synthesis by default, or a
directory of captured 8-bit grayscale PNGs picked deterministically per image.
"""

import os
import logging
from typing import List, Optional, Protocol

import numpy as np

from app.core.errors import MissingInputError
from app.services.distortions.atmos import synthesize_fog_mask, synthesize_rain_base
from app.services.imaging.core import ScalarMask
from app.services.imaging.io import read_gray_mask

logger = logging.getLogger(__name__)

MASK_EXTENSIONS = (".png",)


class MaskSource(Protocol):
    def rain_base(self, rng: np.random.Generator, width: int, height: int, streak_count: int, angle: float) -> ScalarMask:
        ...

    def fog(self, rng: np.random.Generator, width: int, height: int) -> ScalarMask:
        ...


class ProceduralMasks:
    """Synthesized streak and fractal masks."""

    def rain_base(self, rng, width, height, streak_count, angle):
        return synthesize_rain_base(rng, width, height, streak_count, angle)

    def fog(self, rng, width, height):
        return synthesize_fog_mask(rng, width, height)


def _list_masks(directory: str) -> List[str]:
    if not os.path.isdir(directory):
        raise MissingInputError(f"mask directory not found: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(MASK_EXTENSIONS))
    if not names:
        raise MissingInputError(f"no PNG masks in {directory}")
    return [os.path.join(directory, n) for n in names]


class DirectoryMasks:
    """
    Captured masks from disk. Files are listed in sorted order and one is
    chosen with the image's rng, so the choice depends only on the seed.
    Kinds without a directory fall back to procedural synthesis.
    """

    def __init__(self, rain_dir: Optional[str] = None, fog_dir: Optional[str] = None):
        self.rain_files = _list_masks(rain_dir) if rain_dir else None
        self.fog_files = _list_masks(fog_dir) if fog_dir else None
        self._procedural = ProceduralMasks()

    @staticmethod
    def _pick(rng: np.random.Generator, files: List[str], width: int, height: int) -> ScalarMask:
        path = files[int(rng.integers(0, len(files)))]
        logger.debug(f"Using captured mask {path}")
        return read_gray_mask(path, (height, width))

    def rain_base(self, rng, width, height, streak_count, angle):
        if self.rain_files is None:
            return self._procedural.rain_base(rng, width, height, streak_count, angle)
        return self._pick(rng, self.rain_files, width, height)

    def fog(self, rng, width, height):
        if self.fog_files is None:
            return self._procedural.fog(rng, width, height)
        return self._pick(rng, self.fog_files, width, height)


def mask_source(rain_dir: Optional[str] = None, fog_dir: Optional[str] = None) -> MaskSource:
    if rain_dir or fog_dir:
        return DirectoryMasks(rain_dir, fog_dir)
    return ProceduralMasks()
