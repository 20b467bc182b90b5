"""Exception hierarchy shared by all lvat_lab modules."""


class LvatError(Exception):
    """Base class for every error raised by lvat_lab."""


class ShapeError(LvatError, ValueError):
    """Shapes, dimensions or axes do not line up."""


class NonFiniteError(LvatError, ArithmeticError):
    """An operation produced NaN or Inf values."""


class TapeError(LvatError, RuntimeError):
    """Misuse of the recording tape (bad root, foreign tensors)."""


class DataError(LvatError, ValueError):
    """Dataset contents or sizes are invalid for the requested operation."""


class CheckpointError(LvatError, ValueError):
    """A checkpoint document is malformed or of the wrong kind."""


class TrainingDivergedError(NonFiniteError):
    """A training loss became non-finite."""

    def __init__(self, step: int, component: str, detail: str = ""):
        self.step = step
        self.component = component
        message = f"Training diverged at step {step}: {component} is not finite"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)
