"""Exception hierarchy shared by all world4d modules."""


class World4DError(Exception):
    """Base class for all errors raised by world4d."""


class InvalidInputError(World4DError, ValueError):
    """An argument violates a documented precondition."""


class BehindCameraError(InvalidInputError):
    """A point with non-positive camera-space depth was projected."""


class EmptySetError(World4DError, ValueError):
    """An operation needs at least one element but got none."""


class FormatError(World4DError):
    """A file does not follow its on-disk format.

    ``offset`` is the byte offset (binary formats) or line number (text
    formats) where parsing failed, when known.
    """

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ValidationError(World4DError):
    """A manifest, report or run configuration failed validation."""
