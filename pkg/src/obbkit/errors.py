"""Exception types shared across the toolkit.

Everything that signals bad input derives from ``ValueError`` so callers (and
the CLI) can treat it as a validation failure.
"""


class InvalidBoxError(ValueError):
    """Non-finite parameters or non-positive extents."""


class InvalidRefinementError(InvalidBoxError):
    """An offset drove a refined extent to zero or below."""


class DegenerateGeometryError(ValueError):
    """Point set has no area (collinear or coincident points)."""


class ConfigurationError(ValueError):
    """Parameter outside its allowed range, or an unknown class id."""


class ParseError(ValueError):
    def __init__(self, message, lineno=None, source=None):
        self.lineno = lineno
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if lineno is not None:
            where += f"line {lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


class BudgetError(RuntimeError):
    """The PIoU sample lattice would exceed the configured sample budget."""
