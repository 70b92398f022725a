"""Exception hierarchy.

Every error carries its class name as the invariant it reports, so the CLI can
print ``type(err).__name__`` and users can grep for it.
"""


class MOTError(Exception):
    """Base class for all solver errors."""


class ValidationError(MOTError, ValueError):
    """An input violates a structural invariant."""


class CyclicGraph(ValidationError):
    pass


class Disconnected(ValidationError):
    pass


class GammaNotLeaves(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class NotAProbability(ValidationError):
    pass


class Inconsistent(ValidationError):
    pass


class FamilyPreservationViolated(ValidationError):
    pass


class RunningIntersectionViolated(ValidationError):
    pass


class LeafNotSingleton(ValidationError):
    pass


class CostNotCovered(ValidationError):
    pass


class GammaNotIsolated(ValidationError):
    """A constrained vertex shows up in more than one non-leaf cluster."""


class StaleDependency(MOTError, RuntimeError):
    pass


class NeverUpdated(MOTError, RuntimeError):
    pass


class TooLarge(MOTError, ValueError):
    pass


class Infeasible(MOTError, RuntimeError):
    pass


class MaxItersExceeded(MOTError, RuntimeError):
    """Raised when the iteration cap is hit; keeps the partial transcript."""

    def __init__(self, message, transcript=None, engine=None):
        super().__init__(message)
        self.transcript = transcript
        self.engine = engine
