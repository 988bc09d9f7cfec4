"""
Exception hierarchy for the distortion engine.
Every failure raised by the services derives from DistortForgeError so the CLI
and the HTTP layer can turn it into an exit code or a response.
"""

import os
from contextlib import contextmanager
from typing import Iterator, Optional


class DistortForgeError(Exception):
    """Base class for all structured errors."""

    # input file the error was raised while reading, if any
    filename: Optional[str] = None


class DimensionError(DistortForgeError, ValueError):
    """Raster dimensions are too small or do not agree."""


class LengthError(DimensionError):
    """Run-length counts do not cover the raster."""


class ParameterError(DistortForgeError, ValueError):
    """A numeric parameter is outside its domain."""


class GeometryError(DistortForgeError, ValueError):
    """A mask or polygon is empty or degenerate."""


class ParseError(DistortForgeError, ValueError):
    """Input could not be decoded."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)


class SchemaError(ParseError):
    """Input is well-formed but does not follow the expected schema."""


class IntegrityError(DistortForgeError, ValueError):
    """A record references an id that does not exist."""

    def __init__(self, message: str, ref: object = None):
        self.ref = ref
        super().__init__(message)


class SegmentationError(DistortForgeError, ValueError):
    """A single annotation carries an unusable segmentation."""

    def __init__(self, message: str, annotation_id: Optional[int] = None):
        self.annotation_id = annotation_id
        super().__init__(message)


class DegenerateDepthError(DistortForgeError, ValueError):
    """Depth raster carries no information."""


class InapplicableDistortionError(DistortForgeError):
    """The distortion cannot be applied to this image."""


class MissingInputError(DistortForgeError):
    """A file or input required by the distortion is absent."""


class SceneIndexError(DistortForgeError, ValueError):
    """The scene classification index is malformed."""


class ManifestError(DistortForgeError, ValueError):
    """A manifest or ratio file is malformed."""


class UsageError(DistortForgeError):
    """The command was invoked with insufficient or conflicting inputs."""


@contextmanager
def reading(path) -> Iterator[None]:
    """Tag structured errors raised inside the block with the file being read."""
    try:
        yield
    except DistortForgeError as e:
        if e.filename is None:
            e.filename = os.fspath(path)
        raise
