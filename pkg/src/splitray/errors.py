"""Exception types shared across the package."""


class SplitrayError(Exception):
    """Base class for all package errors."""


class ParseError(SplitrayError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class EmptyMeshError(SplitrayError):
    """Operation requires at least one valid triangle."""


class ConfigError(SplitrayError):
    """Invalid or inconsistent run configuration."""


class DimensionMismatchError(SplitrayError):
    """Image or buffer shapes do not agree."""


class DisplacementTooLargeError(SplitrayError):
    """Camera moved more than one voxel for some cascade in a single roll."""


class PlanMismatchError(SplitrayError):
    """Sub-query plan does not tile the query interval."""
