"""The four BSML-style primitives over parallel vectors.

``nprocs`` reads the machine width, ``mkpar`` constructs a width-p vector by
binding pid, ``apply`` transforms one pointwise, and ``put`` exchanges
messages through a p x p send/receive relation, ending the superstep.
``proj`` folds a parallel vector back into ordinary sequential data and is
accounted as an all-to-all replication so that its cost is honest.

All primitives are pure with respect to program values; the active run
context logs declared work and exact word counts for every call.
"""

from __future__ import annotations

from typing import Any, Callable, Mapping, Sequence

from .engine import RunContext, current_context
from .errors import DimensionError, RoutingError, UsageError
from .model import CommMatrix, ParVec


def nprocs() -> int:
    """Number of processors of the active run; constant for its lifetime."""
    return current_context().p


def mkpar(f: Callable[[int], Any], *, work: Any = 1) -> ParVec:
    """Build a parallel vector with f(pid) at each slot.

    f is invoked exactly once per pid, pid order ascending on the simulator.
    ``work`` declares the local cost of one element evaluation (an int, or a
    callable of the pid).
    """
    ctx = current_context()
    return ParVec(ctx.map_pids(lambda i: f(i), work=work))


def apply(pf: ParVec, pv: ParVec, *, work: Any = 1) -> ParVec:
    """Pointwise application: result[i] = pf[i](pv[i]).

    Local work accrues to each pid's counter in the open superstep; ``work``
    may be a callable of the input element.
    """
    ctx = current_context()
    _check_width(ctx, pf, "function vector")
    _check_width(ctx, pv, "argument vector")
    return ParVec(
        ctx.map_pids(lambda i: pf.elems[i](pv.elems[i]), work=work, work_args=lambda i: (pv.elems[i],))
    )


def proj(pv: ParVec) -> tuple:
    """Destructor: fold a parallel vector into a plain length-p tuple.

    Accounted as a gather-to-all: every pid sends its value to every other
    pid, which ends the current superstep.  proj(pv)[i] == pv[i].
    """
    ctx = current_context()
    if ctx.sgl_only:
        raise UsageError("proj is not an SGL operation; use gather")
    _check_width(ctx, pv, "vector")
    p = ctx.p
    sizes = [ctx.sizing(v) for v in pv.elems]
    comm = CommMatrix.from_sends(p, ((s, d, sizes[s]) for s in range(p) for d in range(p) if s != d))
    for d in range(p):
        ctx.add_alloc(d, sum(sizes[s] for s in range(p) if s != d))
    ctx.close_superstep(comm)
    return tuple(pv.elems)


def put(plan: ParVec) -> ParVec:
    """Exchange messages: reception[d][s] = plan[s][d] (relational transpose).

    Each pid's plan entry maps destination pids to optional messages, given as
    a dict, a length-p sequence (None = no message), or a callable probed for
    every destination.  Plans are materialized eagerly, the superstep ends,
    and each pid receives a length-p tuple indexed by source pid.
    """
    ctx = current_context()
    if ctx.sgl_only:
        raise UsageError("put is absent in SGL")
    _check_width(ctx, plan, "message plan")
    p = ctx.p
    sends = [_dense_plan(s, plan.elems[s], p) for s in range(p)]
    comm = CommMatrix.from_sends(
        p,
        (
            (s, d, ctx.sizing(msg))
            for s in range(p)
            for d, msg in enumerate(sends[s])
            if msg is not None and s != d
        ),
    )
    receptions = [tuple(sends[s][d] for s in range(p)) for d in range(p)]
    for d in range(p):
        ctx.add_alloc(d, comm.received(d))
    ctx.close_superstep(comm)
    return ParVec(receptions)


def _check_width(ctx: RunContext, pv: ParVec, what: str) -> None:
    if not isinstance(pv, ParVec):
        raise UsageError(f"{what} must be a ParVec, got {type(pv).__name__}")
    if len(pv) != ctx.p:
        raise DimensionError(f"{what} has width {len(pv)}, machine has p={ctx.p}")


def _dense_plan(src: int, entry: Any, p: int) -> list:
    """Normalize one pid's message plan to a dense length-p option list."""
    row: list[Any] = [None] * p
    if entry is None:
        return row
    if isinstance(entry, Mapping):
        for d, msg in entry.items():
            if not isinstance(d, int) or not 0 <= d < p:
                raise RoutingError(f"pid {src} sends to invalid destination {d!r} (p={p})")
            row[d] = msg
        return row
    if callable(entry):
        for d in range(p):
            row[d] = entry(d)
        return row
    if isinstance(entry, Sequence):
        if len(entry) != p:
            raise DimensionError(f"pid {src}'s dense message plan has length {len(entry)}, expected p={p}")
        return list(entry)
    raise UsageError(f"pid {src}'s message plan must be a mapping, sequence, or callable, got {type(entry).__name__}")
