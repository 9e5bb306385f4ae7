"""Exception hierarchy shared across the package.

Every raisable condition named by an operation contract has its own class so
callers (CLI, HTTP service) can map failures to exit codes / status codes
without string matching. ``code`` is the stable machine-readable identifier.
"""

from __future__ import annotations


class BatsError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message: str, *, step_id: str | None = None):
        super().__init__(message)
        self.step_id = step_id


# -- elicitation / model math -------------------------------------------------

class InvalidTree(BatsError):
    code = "invalid-tree"


class UnknownNode(BatsError):
    code = "unknown-node"


class InfeasibleShortcut(BatsError):
    code = "infeasible-shortcut"


class InconsistentElicitation(BatsError):
    code = "inconsistent-elicitation"


class OutOfRange(BatsError):
    code = "out-of-range"


class ZeroPrior(BatsError):
    code = "zero-prior"


class InfeasibleAdjustment(BatsError):
    code = "infeasible-adjustment"


# -- compiler -----------------------------------------------------------------

class CompileBlocked(BatsError):
    """Compilation refused: the model has validation errors."""

    code = "compile-blocked"

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


# -- engine -------------------------------------------------------------------

class EngineError(BatsError):
    code = "engine-error"


class ContradictoryEvidence(EngineError):
    code = "contradictory-evidence"


class SessionTerminal(EngineError):
    code = "session-terminal"


class UnknownStep(EngineError):
    code = "unknown-step"


class UnknownOutcome(EngineError):
    code = "unknown-outcome"


class StepUnaskable(EngineError):
    """The step's state is fixed by a dependency rule for the rest of the session."""

    code = "step-unaskable"


class NothingToUndo(EngineError):
    code = "nothing-to-undo"


class NoActionsAvailable(EngineError):
    code = "no-actions-available"


# -- librarian ----------------------------------------------------------------

class LibrarianError(BatsError):
    code = "librarian-error"


class IncompleteProbabilities(LibrarianError):
    code = "incomplete-probabilities"


class SiblingSumViolation(LibrarianError):
    code = "sibling-sum-violation"


class IdCollision(LibrarianError):
    code = "id-collision"


# -- persistence ----------------------------------------------------------------

class PersistenceError(BatsError):
    code = "persistence-error"


class ParseError(PersistenceError):
    code = "parse-error"

    def __init__(self, message: str, *, path: str | None = None,
                 position: tuple[int, int] | None = None, causes=()):
        loc = ""
        if path:
            loc += f" at {path}"
        if position:
            loc += f" (line {position[0]}, column {position[1]})"
        super().__init__(message + loc)
        self.path = path
        self.position = position
        self.causes = tuple(causes)


class SchemaVersionMismatch(PersistenceError):
    code = "schema-version-mismatch"


class InvariantViolation(PersistenceError):
    """The document parsed but the resulting model fails validation."""

    code = "invariant-violation"

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class DuplicateModuleId(PersistenceError):
    code = "duplicate-module-id"
