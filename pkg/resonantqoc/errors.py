"""
Exception hierarchy. Every error carries the process exit code the CLI uses for it.
"""


class QOCError(Exception):
    """Base class of all errors raised by resonantqoc."""

    exit_code = 1

    def __init__(self, message: str, **details):
        self.details = details
        super().__init__(message)


class ConfigError(QOCError, ValueError):
    """A configuration file or option is missing, malformed or inconsistent."""

    exit_code = 2


class MissingFileError(ConfigError):
    def __init__(self, path: str):
        super().__init__(f"File not found: {path}", path=path)
        self.path = path


class InvariantViolation(QOCError, ValueError):
    """
    An input breaks a documented invariant or precondition.

    Subclasses set `invariant`, which is prefixed to the message so that the CLI output names it.
    """

    exit_code = 3
    invariant = "invariant"

    def __init__(self, message: str, **details):
        super().__init__(f"[{self.invariant}] {message}", **details)


class InvalidSystem(InvariantViolation):
    invariant = "invalid-system"


class InvalidControl(InvariantViolation):
    invariant = "invalid-control"


class InvalidState(InvariantViolation):
    invariant = "invalid-state"


class InvalidGrid(InvariantViolation):
    invariant = "invalid-grid"


class GridMismatch(InvariantViolation):
    invariant = "grid-mismatch"


class DimensionExceeded(InvariantViolation):
    invariant = "dimension-exceeded"


class PhaseUndefined(InvariantViolation):
    invariant = "phase-undefined"


class AdmissibilityResidualExceeded(InvariantViolation):
    invariant = "admissibility-residual-exceeded"


class SupportOverlap(InvariantViolation):
    invariant = "support-overlap"


class BoundaryMismatch(InvariantViolation):
    invariant = "boundary-mismatch"


class MixedWindow(InvariantViolation):
    invariant = "mixed-window"


class ClassNormDrift(InvariantViolation):
    invariant = "class-norm-drift"


class NoCleanWindow(InvariantViolation):
    invariant = "none-found"


class NotConnected(InvariantViolation):
    invariant = "not-connected"


class InconsistentState(InvariantViolation):
    invariant = "inconsistent-state"


class WrongKind(InvariantViolation):
    invariant = "wrong-kind"


class MissingWeight(InvariantViolation):
    invariant = "missing-weight"


class DimensionMismatch(InvariantViolation):
    invariant = "dimension-mismatch"


class NotControllable(QOCError):
    exit_code = 4

    def __init__(self, components):
        labels = ", ".join("{" + ",".join(str(j + 1) for j in sorted(c)) + "}" for c in components)
        super().__init__(f"The coupling graph is not connected: components {labels}",
                         components=[sorted(c) for c in components])


class NoConvergence(QOCError):
    """
    The solver did not meet its tolerances.

    Parameters:
        message (str): What failed.
        best: The best iterate found (a `SolveResult`), so callers can still export it.
        diagnostics (dict): Violation and gradient norms of the best iterate.
    """

    exit_code = 5

    def __init__(self, message: str, best=None, diagnostics=None):
        super().__init__(message, diagnostics=diagnostics or {})
        self.best = best
        self.diagnostics = diagnostics or {}
