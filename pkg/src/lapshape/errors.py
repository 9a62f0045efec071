"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`LapshapeError`
and carries the process exit code the CLI should use for it.
"""

from __future__ import annotations

from typing import Iterable, Sequence


class LapshapeError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class InvalidInputError(LapshapeError, ValueError):
    """Malformed or out-of-range input."""


class InsufficientSamplingError(InvalidInputError):
    """One or more points have too few neighbors within the radius."""

    def __init__(self, message: str, point_ids: Iterable[int] = ()):
        self.point_ids = sorted(int(i) for i in point_ids)
        if self.point_ids:
            shown = ", ".join(str(i) for i in self.point_ids[:20])
            more = "" if len(self.point_ids) <= 20 else f" (+{len(self.point_ids) - 20} more)"
            message = f"{message}; point ids: {shown}{more}"
        super().__init__(message)


class DegenerateNeighborhoodError(InsufficientSamplingError):
    """Neighborhood is collinear or cannot be triangulated around its center."""


class DisconnectedModelError(InvalidInputError):
    """The operation needs a connected model but the spectrum has a repeated zero."""


class MemoryGuardError(InvalidInputError):
    """A dense allocation would exceed the configured point cap."""


class AmbiguityError(InvalidInputError):
    """A request cannot be satisfied because of tied values."""


class IncompatibleParametersError(InvalidInputError):
    """Two objects were produced with different parameters and cannot be compared."""


class SolverError(LapshapeError):
    """The eigensolver failed to converge or produced an invalid spectrum."""

    exit_code = 3

    def __init__(self, message: str, residuals: Sequence[float] = ()):
        self.residuals = [float(r) for r in residuals]
        super().__init__(message)


class UnsupportedFormatError(LapshapeError):
    """A file uses a format variant this library does not read."""

    exit_code = 4


class PipelineError(LapshapeError):
    """Wraps an error raised inside a multi-stage pipeline with the stage name."""

    def __init__(self, stage: str, cause: LapshapeError):
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code
        super().__init__(f"[{stage}] {cause}")
