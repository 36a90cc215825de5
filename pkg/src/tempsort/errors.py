"""Exception hierarchy shared by all modules."""


class TempsortError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(TempsortError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class LabelOutOfRange(TempsortError, ValueError):
    pass


class ZeroScale(TempsortError, ValueError):
    pass


class SingleClass(TempsortError, ValueError):
    pass


class NotConverged(TempsortError, RuntimeError):
    pass


class Diverged(TempsortError, RuntimeError):
    pass


class EmptyMatrix(TempsortError, ValueError):
    pass


class TooFewSamples(TempsortError, ValueError):
    pass


class ParseError(TempsortError, ValueError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class HeaderMismatch(ParseError):
    pass


class NonFiniteValue(ParseError):
    pass


class SchemaVersionMismatch(TempsortError, ValueError):
    pass


class KindError(TempsortError, ValueError):
    pass


class ConfigError(TempsortError, ValueError):
    pass
