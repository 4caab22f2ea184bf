"""Exception taxonomy shared across the package.

Every error raised on purpose derives from KecrError so callers can
catch the package's failures without swallowing programming mistakes.
"""


class KecrError(Exception):
    pass


class ParseError(KecrError):
    """Malformed input file. Carries the offending path and line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no


class RejectedRelationError(KecrError):
    """Triple file uses a relation outside the retained set."""


class NotFoundError(KecrError):
    """Unknown entity or relation id/name."""


class ShapeError(KecrError):
    """Array arguments do not conform."""


class ConfigurationError(KecrError):
    """Bad config value, or parameters inconsistent with the graph."""


class EmptyBeliefError(KecrError):
    """Preference mining asked for attention over an empty belief state."""


class NoNeighborsError(KecrError):
    """Reasoning start entity has no outgoing edges."""


class NoPathError(KecrError):
    """No candidate survives even after constraints are relaxed."""


class CannotStartError(KecrError):
    """No mentioned entity and no category entity to start reasoning from."""


class RealizationError(KecrError):
    """No template is compatible with the available slots."""


class SamplingError(KecrError):
    """Negative sampling is impossible (entity universe too small)."""


class TrainingError(KecrError):
    """Training preconditions violated (empty corpus, missing labels, ...)."""
