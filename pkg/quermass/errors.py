"""Exception hierarchy for the quermass toolkit."""
from typing import Optional


class QuermassError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(QuermassError):
    """Invalid run file, key or command-line flag."""

    def __init__(self, message: str, source: Optional[str] = None,
                 line: Optional[int] = None, field: Optional[str] = None):
        self.source = source
        self.line = line
        self.field = field
        location = ""
        if source is not None:
            location = f"{source}:{line}: " if line is not None else f"{source}: "
        if field is not None:
            location += f"field '{field}': "
        super().__init__(f"{location}{message}")


class ParameterDomainError(QuermassError, ValueError):
    """Model parameters outside the admissible domain."""


class DegenerateArrangementError(QuermassError):
    """Boundary cycles of a disk union could not be closed."""


class PaddingError(QuermassError):
    """An L-ball leaves the region where spins are known."""


class LabelInconsistencyError(QuermassError):
    """Mixed correctness labels around one complementary component."""


class DegenerateContourError(QuermassError, ValueError):
    """Contour support carries a single spin value."""


class ContourTooLargeError(QuermassError, ValueError):
    """Contour support exceeds the sampling size cap."""


class CapExceededError(QuermassError):
    """Cluster multiplicity above the Ursell enumeration cap."""


class InsufficientSamplesError(QuermassError):
    """Not enough recorded sweeps for a batch-means estimate."""


class RootNotBracketedError(QuermassError):
    """The bracket handed to a root finder has no sign change."""


class EnergyCacheError(QuermassError):
    """Incrementally tracked energy drifted from the recomputed value."""


class ConstraintViolationError(QuermassError):
    """A wired boundary constraint was broken by the chain state."""


class NegativeCorrectionError(QuermassError, ValueError):
    """A higher-order truncated pressure fell below its order-0 value."""
