"""Execution engine: backends, determinism, aborts, re-costing, reports."""

from __future__ import annotations

import json

import pytest

from bspkit import MachineConfig, apply, estimate_runtime, mkpar, nprocs, proj, put, run
from bspkit.algorithms import ALGORITHMS, build_program
from bspkit.engine import DEFAULT_WORKER_CAP, make_environment, stable_digest
from bspkit.errors import CapacityError, ProgramError, UsageError
from bspkit.model import Leaf, MachineConfig as MC, Node, step_cost

M4 = MachineConfig(p=4, g=1.0, l=10.0)


def total_exchange_program():
    p = nprocs()
    return put(mkpar(lambda s: {d: (s,) for d in range(p) if d != s}, work=0))


class TestRun:
    def test_empty_program(self):
        report = run(lambda: None, M4)
        assert report.trace.sync_count == 0
        assert report.trace.total_cost == 0.0
        assert report.result is None

    def test_total_exchange_analytic(self):
        report = run(total_exchange_program, M4)
        assert report.trace.sync_count == 1
        assert report.trace.steps[0].h == 3
        assert report.trace.steps[0].cost == 3 + 10  # work 0, g=1, l=10

    def test_backends_agree_on_values_and_words(self):
        for name in sorted(ALGORITHMS):
            sim = run(build_program(name, 48, seed=2), M4)
            par = run(build_program(name, 48, seed=2), M4, backend="parallel")
            assert par.result_digest == sim.result_digest, name
            assert [s.words for s in par.trace.steps] == [s.words for s in sim.trace.steps], name

    def test_unknown_backend(self):
        with pytest.raises(UsageError):
            run(lambda: None, M4, backend="quantum")

    def test_worker_cap(self):
        with pytest.raises(CapacityError):
            run(lambda: None, MachineConfig(p=DEFAULT_WORKER_CAP + 1, g=1.0, l=1.0), backend="parallel")

    def test_trailing_work_flushed_by_final_barrier(self):
        def program():
            mkpar(lambda i: i, work=3)
            return None

        trace = run(program, M4).trace
        assert trace.sync_count == 1
        assert trace.steps[0].work == (3, 3, 3, 3)
        assert trace.steps[0].words == 0

    def test_no_flush_when_no_pending_work(self):
        def program():
            put(mkpar(lambda i: {}, work=0))
            return None

        assert run(program, M4).trace.sync_count == 1


class TestAbort:
    def test_pid_and_superstep_reported_with_partial_trace(self):
        def program():
            put(mkpar(lambda s: {}, work=0))  # superstep 0 completes

            def boom(v):
                raise RuntimeError("exploded")

            apply(mkpar(lambda i: boom if i == 2 else (lambda v: v), work=0), mkpar(lambda i: i, work=0))

        with pytest.raises(ProgramError) as exc:
            run(program, M4)
        assert exc.value.pid == 2
        assert exc.value.superstep == 1
        assert exc.value.partial_trace is not None
        assert exc.value.partial_trace.sync_count == 1

    def test_lowest_failing_pid_wins_on_parallel_backend(self):
        def program():
            def boom(i):
                if i >= 1:
                    raise RuntimeError(f"pid {i}")
                return i

            return mkpar(boom)

        with pytest.raises(ProgramError) as exc:
            run(program, M4, backend="parallel")
        assert exc.value.pid == 1

    def test_primitives_unusable_from_element_functions(self):
        # worker threads have no run context; misuse is a clean UsageError
        def program():
            return mkpar(lambda i: nprocs())

        with pytest.raises(ProgramError) as exc:
            run(program, M4, backend="parallel")
        assert isinstance(exc.value.cause, UsageError)


class TestDeterminism:
    def test_bit_identical_reports_modulo_timestamp(self):
        for name in sorted(ALGORITHMS):
            a = run(build_program(name, 32, seed=9), M4).to_dict()
            b = run(build_program(name, 32, seed=9), M4).to_dict()
            a["environment"].pop("timestamp")
            b["environment"].pop("timestamp")
            assert a == b, name

    def test_trace_invariants_recomputable(self):
        # stored h and cost reproduce from stored work/comm, for every step
        for name in sorted(ALGORITHMS):
            report = run(build_program(name, 40, seed=4), M4)
            for step in report.trace.steps:
                assert step.h == max(max(step.comm.sent(i), step.comm.received(i)) for i in range(4))
                assert step.cost == step_cost(step.work, step.comm, M4)


class TestEstimateRuntime:
    def test_same_machine_reproduces_total(self):
        report = run(build_program("samplesort", 500, seed=1), M4)
        assert estimate_runtime(report.trace, M4) == report.trace.total_cost

    def test_doubling_g_doubles_comm_term(self):
        report = run(total_exchange_program, M4)
        base = estimate_runtime(report.trace, M4)
        doubled = estimate_runtime(report.trace, MachineConfig(p=4, g=2.0, l=10.0))
        h_total = sum(s.h for s in report.trace.steps)
        assert doubled - base == h_total  # g went from 1 to 2

    def test_delta_l_is_sync_count_times_delta(self):
        report = run(build_program("samplesort", 1000, seed=1), M4)
        lo = estimate_runtime(report.trace, MachineConfig(p=4, g=1.0, l=0.0))
        hi = estimate_runtime(report.trace, MachineConfig(p=4, g=1.0, l=1000.0))
        assert hi - lo == report.trace.sync_count * 1000.0

    def test_usage_error_without_work_counts(self):
        from bspkit.model import SuperstepRecord, trace_totals

        trace = trace_totals([SuperstepRecord.from_summary(0, max_work=None, h=1, words=1, cost=11.0)])
        with pytest.raises(UsageError):
            estimate_runtime(trace, M4)

    def test_recost_on_machine_tree(self):
        from bspkit import run_nested, scatter

        tree = Node(children=(Leaf(MC(p=2, g=1.0, l=10.0)), Leaf(MC(p=2, g=1.0, l=10.0))), g=2.0, l=20.0)
        _res, trace = run_nested(tree, lambda: scatter(0, [1, 2, 3, 4]))
        assert estimate_runtime(trace, tree) == trace.total_cost
        cheaper = Node(children=tree.children, g=2.0, l=0.0)
        assert estimate_runtime(trace, cheaper) == trace.total_cost - 20.0


class TestEnvironmentAndReports:
    def test_environment_fields_never_empty(self):
        env = make_environment("simulate", 1, {"hardware": "", "note": ""})
        d = env.to_dict()
        assert d["hardware"] == "unknown"
        assert d["note"] == "unknown"
        assert all(str(v).strip() for v in d.values())

    def test_overrides_land_in_report(self):
        report = run(lambda: None, M4, env={"hardware": "bench rig 3", "cluster": "teaching-lab"})
        d = report.to_dict()["environment"]
        assert d["hardware"] == "bench rig 3"
        assert d["cluster"] == "teaching-lab"

    def test_report_json_serializable(self):
        report = run(build_program("broadcast", 4, seed=0), M4)
        text = json.dumps(report.to_dict(), sort_keys=True)
        assert "result_digest" in text

    def test_wall_time_only_on_parallel(self):
        assert run(lambda: None, M4).wall_time is None
        assert run(lambda: None, M4, backend="parallel").wall_time is not None

    def test_peak_words_tracked(self):
        def program():
            proj(mkpar(lambda i: (1, 2, 3), work=0))  # each pid holds 3 + receives 9

        report = run(program, M4)
        assert report.peak_words >= 9


class TestStableDigest:
    def test_dict_order_independent(self):
        assert stable_digest({"a": 1, "b": 2}) == stable_digest({"b": 2, "a": 1})

    def test_distinguishes_values(self):
        assert stable_digest([1, 2]) != stable_digest([2, 1])
        assert stable_digest(1.0) != stable_digest(1)
