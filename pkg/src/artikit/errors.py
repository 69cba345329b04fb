"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ArtikitError(Exception):
    """Base class for every error raised by this package."""


class ParseError(ArtikitError):
    def __init__(self, message: str, path: str = "$") -> None:
        super().__init__(f"{path}: {message}")
        self.path = path


class SchemaError(ArtikitError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class FrameError(ArtikitError):
    pass


class NonOrthogonal(FrameError):
    pass


class ZeroAxis(FrameError):
    pass


class MissingSource(ArtikitError):
    pass


class MirrorUnsupportedPrimitive(ArtikitError):
    pass


class EmptyProgram(ArtikitError):
    pass


class DegenerateSolid(ArtikitError):
    pass


class ArityMismatch(ArtikitError):
    pass


class MissingGeometry(ArtikitError):
    def __init__(self, part_id: str) -> None:
        super().__init__(f"no geometry for part {part_id!r}")
        self.part_id = part_id


class UnknownJointId(ArtikitError):
    pass


class DegenerateCloud(ArtikitError):
    pass


class EmptyCloud(ArtikitError):
    pass


class ZeroGtVolume(ArtikitError):
    pass


class EmptyText(ArtikitError):
    pass


class StoreIoError(ArtikitError):
    pass


class UnsupportedElement(ArtikitError):
    pass


class HttpError(ArtikitError):
    def __init__(self, message: str, status: int | None = None) -> None:
        super().__init__(message)
        self.status = status


class AgentProtocolError(ArtikitError):
    pass
