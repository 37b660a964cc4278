"""Child-side executor: runs one VM start's worth of iterations.

Protocol: the parent writes a single JSON job document to the child's
standard input; the child replies with one JSON result line on standard
output (the last line, so a stdout-targeted write workload does not corrupt
the channel).  Exit code 0 means success; on failure a structured JSON error
is written to standard error and the exit code is nonzero.

The clock is injected through :func:`clock_from_spec`, so tests and jobs can
substitute a deterministic counter for the monotonic hardware clock.
"""

from __future__ import annotations

import gc
import json
import os
import sys
import time

from . import workloads
from .model import WorkloadKind, WorkloadSpec
from .workloads import create_instance, drain_sink


class ClockError(RuntimeError):
    """The environment's clock misbehaved (e.g. went backwards)."""


class MonotonicClock:
    """Highest-resolution monotonic clock the platform offers."""

    def read(self) -> int:
        return time.perf_counter_ns()

    def resolution_ns(self) -> int:
        best = None
        for _ in range(2000):
            a = time.perf_counter_ns()
            b = time.perf_counter_ns()
            if b > a and (best is None or b - a < best):
                best = b - a
        return best if best is not None else 1


class FakeClock:
    """Deterministic counter advancing a fixed step per read."""

    def __init__(self, step_ns: int, start_ns: int = 0):
        self.step_ns = step_ns
        self._now = start_ns

    def read(self) -> int:
        value = self._now
        self._now += self.step_ns
        return value

    def resolution_ns(self) -> int:
        return self.step_ns


def clock_from_spec(spec: dict | None):
    if spec is None:
        return MonotonicClock()
    return FakeClock(step_ns=int(spec["step_ns"]))


# Campaigns executed inside this process; a fresh executor process must
# observe zero, which the parent asserts to verify start-level isolation.
_EXECUTED_CAMPAIGNS = 0


def execute_job(job: dict, clock=None) -> dict:
    """Run warmup and measurement iterations as described by ``job``.

    Each iteration brackets exactly ``repetitions`` workload executions
    between two clock reads; the sink is drained (and the heap optionally
    collected) outside the timed window.
    """
    global _EXECUTED_CAMPAIGNS
    executions_at_start = _EXECUTED_CAMPAIGNS
    _EXECUTED_CAMPAIGNS += 1

    wl = job["workload"]
    spec = WorkloadSpec(
        kind=WorkloadKind(wl["kind"]),
        size=wl["size"],
        injected_delay_ns=wl.get("injected_delay_ns", 0),
        seed=wl.get("seed", 0),
        delay_subset_fraction=wl.get("delay_subset_fraction", 1.0),
    )
    warmup_iterations = job["warmup_iterations"]
    measurement_iterations = job["measurement_iterations"]
    repetitions = job["repetitions"]
    trigger_gc = job.get("trigger_gc_between_iterations", False)

    workloads.check_memory_budget(
        spec,
        iterations=warmup_iterations + measurement_iterations,
        repetitions=repetitions,
        budget_bytes=job.get("mem_budget_bytes"),
    )

    if clock is None:
        clock = clock_from_spec(job.get("clock"))
    resolution_ns = clock.resolution_ns()

    instance = create_instance(spec, write_target=job.get("write_target", "memory"))

    warmup_ns: list[int] = []
    measurement_ns: list[int] = []
    for bucket, count in ((warmup_ns, warmup_iterations), (measurement_ns, measurement_iterations)):
        for _ in range(count):
            start = clock.read()
            instance.run_repetitions(repetitions)
            end = clock.read()
            if end < start:
                raise ClockError(f"clock went backwards: start={start}, end={end}")
            bucket.append(end - start)
            drain_sink(instance)
            if trigger_gc:
                gc.collect()

    return {
        "warmup_ns": warmup_ns,
        "measurement_ns": measurement_ns,
        "clock_resolution_ns": resolution_ns,
        "executions_at_start": executions_at_start,
    }


def main() -> int:
    try:
        job = json.loads(sys.stdin.read())
        affinity = job.get("cpu_affinity")
        if affinity and hasattr(os, "sched_setaffinity"):
            os.sched_setaffinity(0, set(affinity))
        result = execute_job(job)
    except Exception as exc:  # structured diagnostics instead of a bare crash
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error), file=sys.stderr)
        return 1
    sys.stdout.write(json.dumps(result) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
