"""Exception types raised by the tracker and its building blocks."""


class NorstError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(NorstError, ValueError):
    pass


class DegenerateSubspaceError(NorstError, ValueError):
    """Input does not span a subspace of the requested dimension."""


class SingularSupportError(NorstError):
    """The restricted normal matrix for a support set is (numerically) singular.

    Usually the support is too large or it overlaps the subspace estimate.
    """

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class ConvergenceError(NorstError):
    """An iterative solver hit its iteration cap.

    The last iterate and its residual are kept so callers can inspect them.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class ParseError(NorstError, ValueError):
    """Malformed stream or config file."""

    def __init__(self, message, line=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        full = f"{': '.join(where)}: {message}" if where else message
        super().__init__(full)
        self.line = line
        self.path = path


class DegenerateGapWarning(UserWarning):
    """Top-r singular subspace is not unique (tied singular values)."""
