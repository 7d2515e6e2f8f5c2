"""Exception hierarchy shared by every module."""


class StiefelSketchError(Exception):
    """Base class for all package errors."""


class DimensionError(StiefelSketchError, ValueError):
    """Operands have incompatible shapes, or an argument is out of range."""


class DefinitenessError(StiefelSketchError, ArithmeticError):
    """A matrix required to be symmetric positive definite is not."""


class GeometryError(StiefelSketchError, ArithmeticError):
    """A manifold operation hit a degenerate configuration."""


class RankDeficiencyError(GeometryError):
    """A basis W has W^T B W singular, so it cannot be B-orthonormalized."""


class SingularPreconditionerError(StiefelSketchError, ArithmeticError):
    """The preconditioner factor is (numerically) singular."""


class LineSearchError(StiefelSketchError, RuntimeError):
    """Backtracking exhausted its step budget without sufficient decrease."""


class ParseError(StiefelSketchError, ValueError):
    """Malformed input file. ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class ConfigError(StiefelSketchError, ValueError):
    """Invalid or inconsistent experiment configuration; ``field`` names the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
