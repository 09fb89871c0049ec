"""Exception hierarchy shared by every module."""

from __future__ import annotations


class BvcsError(Exception):
    """Base class for all errors raised by this package."""


# workbook model

class MalformedAddress(BvcsError, ValueError):
    pass


class ParseError(BvcsError):
    """Malformed workbook document or formula text."""

    def __init__(self, message: str, location: str | None = None, position: int | None = None):
        self.message = message
        self.location = location
        self.position = position
        where = []
        if location:
            where.append(location)
        if position is not None:
            where.append(f"pos {position}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class EmptyWorkbook(BvcsError):
    pass


class UnresolvedSheet(BvcsError):
    def __init__(self, name: str, location: str | None = None):
        self.name = name
        suffix = f" (referenced from {location})" if location else ""
        super().__init__(f"formula names missing sheet {name!r}{suffix}")


class UnknownSheet(BvcsError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(name)

    def __str__(self) -> str:
        return f"unknown sheet {self.name!r}"


class OverwriteFormula(BvcsError):
    pass


# schema generation

class SchemaFormatError(BvcsError):
    pass


class ConflictingTable(BvcsError):
    pass


# data collection

class BindingFormatError(BvcsError):
    pass


class UnknownAdapter(BindingFormatError):
    pass


class UnboundField(BvcsError):
    def __init__(self, missing: list[tuple[str, str]]):
        self.missing = missing
        listed = ", ".join(f"{sheet}:{cell}" for sheet, cell in missing)
        super().__init__(f"no binding for schema field(s): {listed}")


class ResolutionError(BvcsError):
    """A single field could not be resolved for a policy."""

    kind = "ResolutionError"


class MissingData(ResolutionError):
    kind = "MissingData"


class AmbiguousData(ResolutionError):
    kind = "AmbiguousData"


class SourceUnavailable(ResolutionError):
    kind = "SourceUnavailable"


class TypeMismatch(ResolutionError):
    kind = "TypeMismatch"


# validation / batch

class CapacityExceeded(BvcsError):
    pass


class ManifestError(BvcsError):
    pass


class IoError(BvcsError):
    """Evidence, schema or report files could not be written."""
