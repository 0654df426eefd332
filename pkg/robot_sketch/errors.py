# Error types
"""
Exception hierarchy for the sketch toolchain.

Every error carries the process exit code the command line reports for it:
1 for bad input, 2 for internal invariant violations.
"""

from typing import Optional


class SketchError(Exception):
    """Base class for all toolchain errors."""

    exit_code = 1


class InputError(SketchError):
    exit_code = 1


class RasterError(InputError):
    """Unreadable or inconsistent raster data."""


class SkeletonError(InputError):
    """Skeleton input that is not 1 pixel thin."""

    def __init__(self, message: str, pixel: Optional[tuple] = None):
        super().__init__(message)
        self.pixel = pixel


class PathError(InputError):
    """Pixel path or polyline that cannot be turned into a stroke."""


class SvgParseError(InputError):
    def __init__(self, message: str, offset: Optional[int] = None, command: Optional[str] = None):
        super().__init__(message)
        self.offset = offset
        self.command = command


class ProgramError(InputError):
    """Motion program that violates the grammar or its invariants."""

    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class PlanError(InputError):
    pass


class ConfigError(InputError):
    pass


class LoraShapeError(InputError):
    def __init__(self, message: str, adapter_index: Optional[int] = None):
        super().__init__(message)
        self.adapter_index = adapter_index


class PromptError(InputError):
    pass


class NoiseError(InputError):
    """Timestep out of range or mismatched vector dimensions."""


class DenoiserError(InputError):
    """Operation not supported for the given denoiser."""


class InvariantViolation(SketchError):
    exit_code = 2


class TrainingDivergedError(InvariantViolation):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"training diverged at iteration {iteration}: loss {loss!r}")
        self.iteration = iteration
        self.loss = loss


class StageError(SketchError):
    """Wraps an error raised inside a named pipeline stage."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code if isinstance(cause, SketchError) else 2
