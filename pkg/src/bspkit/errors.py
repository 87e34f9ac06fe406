"""Exception hierarchy shared by all bspkit modules."""

from __future__ import annotations


class BspError(Exception):
    """Base class for every error raised by bspkit."""


class DimensionError(BspError):
    """A vector, matrix, or chunk list has the wrong shape for the machine."""


class RoutingError(BspError):
    """A message names a processor id outside 0..p-1."""


class UsageError(BspError):
    """An operation was called outside its contract (e.g. no active run)."""


class CapacityError(BspError):
    """The parallel backend was asked for more workers than the configured cap."""


class ValidationError(BspError):
    """Input data failed a domain check (non-finite coordinates, bad mass, ...)."""


class ProgramError(BspError):
    """A user-supplied per-processor function raised during a run.

    Carries the failing pid, the index of the superstep that was open at the
    time, and the cost trace accumulated up to (not including) that superstep.
    """

    def __init__(self, pid: int, superstep: int, cause: BaseException, partial_trace=None):
        super().__init__(f"program failed at pid {pid}, superstep {superstep}: {cause!r}")
        self.pid = pid
        self.superstep = superstep
        self.cause = cause
        self.partial_trace = partial_trace
