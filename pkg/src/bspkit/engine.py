"""Program execution: the exact-cost sequential simulator and the thread backend.

A program is a zero-argument callable that uses the bsml/sgl primitives while
a run context is active.  The ``simulate`` backend evaluates every per-pid
function in ascending pid order on the calling thread and produces an exact,
deterministic cost trace.  The ``parallel`` backend evaluates the asynchronous
phases of each superstep on a thread pool and joins them at the superstep
boundary, so messages become visible only after the barrier; its traces carry
identical counts, plus a wall-clock measurement.
"""

from __future__ import annotations

import hashlib
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from contextvars import ContextVar
from dataclasses import dataclass, is_dataclass, fields as dc_fields
from datetime import datetime, timezone
from typing import Any, Callable, Mapping

from . import __version__
from .errors import CapacityError, ProgramError, UsageError
from .model import (
    CommMatrix,
    CostTrace,
    Leaf,
    Machine,
    Node,
    SuperstepRecord,
    default_sizing,
    machine_to_dict,
    total_p,
    trace_to_dict,
    trace_totals,
)

BACKENDS = ("simulate", "parallel")

#: Hard ceiling on pids for the parallel backend; override per run.
DEFAULT_WORKER_CAP = 64

_CURRENT: ContextVar["RunContext | None"] = ContextVar("bspkit_run_context", default=None)


class RunContext:
    """Mutable state of one run: machine, open superstep, trace so far."""

    def __init__(
        self,
        machine: Machine,
        backend: str = "simulate",
        sizing: Callable[[Any], int] | None = None,
        pool: ThreadPoolExecutor | None = None,
        sgl_only: bool = False,
    ):
        self.machine = machine
        self.backend = backend
        self.p = total_p(machine)
        self.sizing = sizing if sizing is not None else default_sizing
        self.pool = pool
        self.sgl_only = sgl_only or isinstance(machine, (Leaf, Node))
        self.sgl_impl = None  # installed lazily by the sgl module
        self.steps: list[SuperstepRecord] = []
        self.open_work = [0] * self.p
        self.open_alloc = [0] * self.p
        self.peak_words = 0

    # -- accounting -------------------------------------------------------

    def add_work(self, pid: int, amount: int) -> None:
        self.open_work[pid] += amount

    def add_alloc(self, pid: int, words: int) -> None:
        self.open_alloc[pid] += words

    def close_superstep(self, comm: CommMatrix) -> SuperstepRecord:
        """End the open superstep: record it and open a fresh one."""
        rec = SuperstepRecord.close(len(self.steps), tuple(self.open_work), comm, self.machine)
        self.steps.append(rec)
        self.peak_words = max(self.peak_words, max(self.open_alloc, default=0))
        self.open_work = [0] * self.p
        self.open_alloc = [0] * self.p
        return rec

    def partial_trace(self) -> CostTrace:
        return trace_totals(self.steps)

    def finish(self) -> CostTrace:
        """Close the run; trailing local work is flushed by the final barrier."""
        if any(self.open_work):
            self.close_superstep(CommMatrix.zeros(self.p))
        else:
            self.peak_words = max(self.peak_words, max(self.open_alloc, default=0))
        return self.partial_trace()

    # -- per-pid evaluation -------------------------------------------------

    def map_pids(self, call: Callable[[int], Any], work: Any = 1, work_args: Callable[[int], tuple] | None = None) -> list:
        """Evaluate call(i) for every pid and accrue its declared work.

        ``work`` is an integer cost per element evaluation, or a callable
        applied to the same arguments as the element function.  Results are
        assembled by pid regardless of completion order; the first failing
        pid (lowest) aborts the run.
        """
        results: list[Any] = [None] * self.p
        errors: dict[int, BaseException] = {}

        def at(i: int) -> None:
            try:
                results[i] = call(i)
            except Exception as exc:  # user code may raise anything
                errors[i] = exc

        if self.backend == "parallel" and self.pool is not None and self.p > 1:
            list(self.pool.map(at, range(self.p)))
        else:
            for i in range(self.p):
                at(i)
                if i in errors:
                    break
        if errors:
            pid = min(errors)
            raise ProgramError(pid, len(self.steps), errors[pid], partial_trace=self.partial_trace())
        for i in range(self.p):
            if callable(work):
                args = work_args(i) if work_args is not None else (i,)
                self.add_work(i, int(work(*args)))
            else:
                self.add_work(i, int(work))
            self.add_alloc(i, self.sizing(results[i]))
        return results


def current_context() -> RunContext:
    ctx = _CURRENT.get()
    if ctx is None:
        raise UsageError("no active run: call this primitive from inside a program passed to engine.run()")
    return ctx


def _activate(ctx: RunContext):
    return _CURRENT.set(ctx)


def _deactivate(token) -> None:
    _CURRENT.reset(token)


# --- environment record ------------------------------------------------------


@dataclass(frozen=True)
class EnvironmentRecord:
    """Experiment-setup documentation embedded in every emitted report."""

    software: str
    hardware: str
    cores_used: int
    threads: str
    measured: str
    timestamp: str
    extra: tuple[tuple[str, str], ...] = ()

    def to_dict(self) -> dict:
        def nonempty(v: str) -> str:
            return v if str(v).strip() else "unknown"

        d = {
            "software": nonempty(self.software),
            "hardware": nonempty(self.hardware),
            "cores_used": self.cores_used,
            "threads": nonempty(self.threads),
            "measured": nonempty(self.measured),
            "timestamp": nonempty(self.timestamp),
        }
        for k, v in self.extra:
            d[nonempty(k)] = nonempty(v)
        return d


def make_environment(backend: str, workers: int, overrides: Mapping[str, str] | None = None) -> EnvironmentRecord:
    base = {
        "software": f"python {platform.python_version()}; bspkit {__version__}",
        "hardware": f"{platform.platform()}; {platform.machine() or 'unknown'}; {os.cpu_count() or 'unknown'} cores",
        "threads": str(workers) if backend == "parallel" else "1",
        "measured": "wall-clock seconds + model cost (time-units)" if backend == "parallel" else "model cost (time-units)",
    }
    extra = []
    for k, v in (overrides or {}).items():
        if k in base:
            base[k] = v
        elif k == "cores_used":
            workers = int(v)
        else:
            extra.append((str(k), str(v)))
    return EnvironmentRecord(
        software=base["software"],
        hardware=base["hardware"],
        cores_used=workers,
        threads=base["threads"],
        measured=base["measured"],
        timestamp=datetime.now(timezone.utc).isoformat(),
        extra=tuple(extra),
    )


# --- result digesting --------------------------------------------------------


def _canon(value: Any) -> str:
    """Canonical text for hashing: stable across runs for equal values."""
    if value is None or isinstance(value, (bool, int, str)):
        return repr(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bytes):
        return "b:" + value.hex()
    if isinstance(value, dict):
        items = sorted(value.items(), key=lambda kv: _canon(kv[0]))
        return "{" + ",".join(f"{_canon(k)}:{_canon(v)}" for k, v in items) + "}"
    if is_dataclass(value) and not isinstance(value, type):
        inner = ",".join(f"{f.name}={_canon(getattr(value, f.name))}" for f in dc_fields(value))
        return f"{type(value).__name__}({inner})"
    if isinstance(value, (list, tuple, set, frozenset)):
        elems = sorted(map(_canon, value)) if isinstance(value, (set, frozenset)) else [_canon(v) for v in value]
        return f"{type(value).__name__}[" + ",".join(elems) + "]"
    if hasattr(value, "elems"):  # ParVec
        return f"{type(value).__name__}[" + ",".join(_canon(v) for v in value.elems) + "]"
    return repr(value)


def stable_digest(value: Any) -> str:
    return hashlib.sha256(_canon(value).encode("utf-8")).hexdigest()


# --- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class RunReport:
    """Everything one run produced: values, trace, measurement, environment."""

    result: Any
    result_digest: str
    machine: Machine
    backend: str
    trace: CostTrace
    environment: EnvironmentRecord
    wall_time: float | None = None
    peak_words: int = 0

    def to_dict(self) -> dict:
        preview = repr(self.result)
        if len(preview) > 200:
            preview = preview[:197] + "..."
        return {
            "result_digest": self.result_digest,
            "result_preview": preview,
            "machine": machine_to_dict(self.machine),
            "backend": self.backend,
            "wall_time": self.wall_time,
            "peak_words_per_pid": self.peak_words,
            "environment": self.environment.to_dict(),
            "trace": trace_to_dict(self.trace),
        }


def run(
    program: Callable[[], Any],
    machine: Machine,
    backend: str = "simulate",
    *,
    sizing: Callable[[Any], int] | None = None,
    worker_cap: int = DEFAULT_WORKER_CAP,
    env: Mapping[str, str] | None = None,
    _sgl_only: bool = False,
) -> RunReport:
    """Execute a closed program on the given machine and backend.

    Raises ProgramError (with the partial trace attached) if the program
    itself fails; CapacityError if the parallel backend would need more than
    ``worker_cap`` pids.
    """
    if backend not in BACKENDS:
        raise UsageError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    p = total_p(machine)
    pool = None
    workers = 1
    if backend == "parallel":
        if p > worker_cap:
            raise CapacityError(f"p={p} exceeds the worker cap of {worker_cap}")
        workers = min(p, os.cpu_count() or 1)
        pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="bspkit-pid")
    ctx = RunContext(machine, backend=backend, sizing=sizing, pool=pool, sgl_only=_sgl_only)
    token = _activate(ctx)
    t0 = time.perf_counter()
    try:
        result = program()
        wall = time.perf_counter() - t0
    finally:
        _deactivate(token)
        if pool is not None:
            pool.shutdown(wait=True)
    trace = ctx.finish()
    return RunReport(
        result=result,
        result_digest=stable_digest(result),
        machine=machine,
        backend=backend,
        trace=trace,
        environment=make_environment(backend, workers if backend == "parallel" else 1, env),
        wall_time=wall if backend == "parallel" else None,
        peak_words=ctx.peak_words,
    )


def estimate_runtime(trace: CostTrace, machine: Machine) -> float:
    """Re-price a recorded trace on a (possibly different) target machine.

    Work and communication counts are machine-independent, so a trace recorded
    once can produce runtime estimates for any (g, l, r).
    """
    return float(sum(step.recost(machine) for step in trace.steps))
