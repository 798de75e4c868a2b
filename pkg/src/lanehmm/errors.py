"""Exception hierarchy shared by all lanehmm modules."""


class LaneHmmError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(LaneHmmError):
    """A model parameter or runtime configuration value is out of its domain."""


class ConfigError(LaneHmmError):
    """Inconsistent or conflicting run configuration (e.g. preset vs. header)."""


class SequenceFormatError(LaneHmmError):
    """A sequence or results file failed to parse.

    Carries the source path and 1-based line number when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class MapExtractError(LaneHmmError):
    """A map extract file failed to parse or violates its schema."""


class SegmentNotFoundError(LaneHmmError):
    """No road segment within the query radius."""


class EmptyObjectiveError(LaneHmmError):
    """The tuning objective has no evaluable (non-crossing, annotated) frames."""


class InternalError(LaneHmmError):
    """An invariant that should be unreachable was violated (upstream bug)."""
