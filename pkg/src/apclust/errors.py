"""Exception hierarchy shared by every apclust module."""


class ApcError(Exception):
    """Base class for all apclust errors."""


class InvalidConfigError(ApcError, ValueError):
    pass


class InfeasibleCapacityError(InvalidConfigError):
    pass


class DimensionError(ApcError, ValueError):
    pass


class UndefinedMetricError(ApcError, ValueError):
    pass


class AssignmentError(ApcError, ValueError):
    pass


class EmptyClusterError(ApcError):
    """Raised by a centroid update when some clusters have no members.

    ``clusters`` lists the empty cluster indices; callers that can reseed
    (the AWC driver does) catch this or use the lower-level helpers.
    """

    def __init__(self, clusters):
        self.clusters = tuple(int(c) for c in clusters)
        super().__init__(f"empty clusters: {list(self.clusters)}")


class DomainError(ApcError, ValueError):
    """A value outside the allowed domain (negative or non-finite)."""

    def __init__(self, message, row=None, col=None):
        self.row = row
        self.col = col
        super().__init__(message)


class FormatError(ApcError, ValueError):
    """Malformed on-disk data. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
