"""Exception types raised across the package."""


class LegoError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(LegoError, ValueError):
    pass


class InvalidStateError(LegoError, RuntimeError):
    pass


class DegenerateGraphError(LegoError):
    """A node has zero (normalized) degree."""


class DegeneratePatchError(LegoError):
    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"neighborhood of point {self.index} is degenerate (all offsets zero)")


class DegenerateFrameError(LegoError):
    def __init__(self, index, message=None):
        self.index = int(index)
        super().__init__(message or f"cannot extract a frame at point {self.index}: zero matrix")


class ConvergenceError(LegoError):
    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        super().__init__(message)


class AlignmentError(LegoError):
    """Local views cannot be aligned, e.g. the overlap graph is disconnected."""

    def __init__(self, message, components=None):
        self.components = components
        super().__init__(message)


class StageError(LegoError):
    """Wraps an error raised inside a pipeline stage, tagging the stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
