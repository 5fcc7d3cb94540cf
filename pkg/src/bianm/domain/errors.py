from typing import Optional


class BianmError(Exception):
    """Base class for every error raised by the package."""


class InvalidLagError(BianmError, ValueError):
    """Lag vector or lag table violates the Hermitian Toeplitz structure."""


class ShapeMismatchError(BianmError, ValueError):
    """Matrix, vector or operator sizes are inconsistent."""


class InvalidObservationError(BianmError, ValueError):
    """Observation inputs are outside their admissible range."""


class SolverError(BianmError, ValueError):
    """Invalid solver settings or problem description."""


class NumericalError(BianmError):
    """A matrix factorisation failed."""

    def __init__(self, message: str, side: int, norm: float, non_finite: int) -> None:
        super().__init__(
            f"{message} (side={side}, frobenius_norm={norm:.3e}, "
            f"non_finite_entries={non_finite})"
        )
        self.side = side
        self.norm = norm
        self.non_finite = non_finite


class SeparationInfeasibleError(BianmError):
    """Rejection sampling could not satisfy the requested separation."""

    def __init__(self, policy: str, gap: float, cap: int) -> None:
        super().__init__(
            f"no draw satisfied {policy} separation (required gap {gap:.4f}) "
            f"after {cap} redraws"
        )
        self.policy = policy
        self.gap = gap
        self.cap = cap


class ConfigError(BianmError, ValueError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None) -> None:
        where = ""
        if key is not None:
            where = f"{key}: " if line is None else f"line {line}, {key}: "
        super().__init__(f"{where}{message}")
        self.key = key
        self.line = line


class OutputPathError(BianmError):
    """Result or channel file cannot be read or written."""
