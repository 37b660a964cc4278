"""Campaign coordinator: spawns isolated executor processes and assembles series.

Each VM start is a fresh OS process launched via ``python -m
perfdelta.executor``; the parent stays single-threaded and at most one pair
of executors runs at a time.  An optional ``launch_log`` list receives one
entry per launch epoch so structural tests can assert the launch pattern.
"""

from __future__ import annotations

import json
import logging
import os
import platform
import subprocess
import sys

from . import workloads
from .executor import FakeClock
from .model import MeasurementConfig, MeasurementSeries, VmRun, WorkloadSpec, utc_now

log = logging.getLogger(__name__)


class CampaignError(RuntimeError):
    """An executor failed; carries which VM (and version) and its diagnostics."""

    def __init__(self, vm_index: int, diagnostics: str, version: str | None = None):
        where = f"vm {vm_index}" if version is None else f"{version} vm {vm_index}"
        super().__init__(f"executor failed for {where}: {diagnostics}")
        self.vm_index = vm_index
        self.version = version
        self.diagnostics = diagnostics


def _clock_job_entry(clock) -> dict | None:
    if clock is None:
        return None
    if isinstance(clock, FakeClock):
        return {"step_ns": clock.step_ns}
    raise ValueError(f"cannot serialize clock of type {type(clock).__name__} into a job")


def _build_job(
    config: MeasurementConfig,
    workload: WorkloadSpec,
    clock,
    cpu_affinity: list[int] | None = None,
) -> dict:
    job = {
        "workload": {
            "kind": workload.kind.value,
            "size": workload.size,
            "injected_delay_ns": workload.injected_delay_ns,
            "seed": workload.seed,
            "delay_subset_fraction": workload.delay_subset_fraction,
        },
        "warmup_iterations": config.warmup_iterations,
        "measurement_iterations": config.measurement_iterations,
        "repetitions": config.repetitions,
        "trigger_gc_between_iterations": config.trigger_gc_between_iterations,
        "clock": _clock_job_entry(clock),
    }
    if cpu_affinity:
        job["cpu_affinity"] = cpu_affinity
    return job


def _spawn(job: dict) -> subprocess.Popen:
    proc = subprocess.Popen(
        [sys.executable, "-m", "perfdelta.executor"],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    assert proc.stdin is not None
    proc.stdin.write(json.dumps(job))
    proc.stdin.close()
    proc.stdin = None  # communicate() must not touch the already-closed pipe
    return proc

def _finish(proc: subprocess.Popen, vm_index: int, version: str | None = None) -> dict:
    out, err = proc.communicate()
    if proc.returncode != 0:
        raise CampaignError(vm_index, err.strip() or f"exit code {proc.returncode}", version)
    lines = [line for line in out.splitlines() if line.strip()]
    if not lines:
        raise CampaignError(vm_index, "executor produced no result line", version)
    try:
        result = json.loads(lines[-1])
    except json.JSONDecodeError as exc:
        raise CampaignError(vm_index, f"unparseable result line: {exc}", version) from exc
    if result.get("executions_at_start") != 0:
        raise CampaignError(
            vm_index,
            f"executor was not fresh (counter={result.get('executions_at_start')})",
            version,
        )
    return result


def _environment_metadata(clock_resolution_ns: int | None) -> dict[str, str]:
    env = {
        "os": platform.platform(),
        "cpu": platform.processor() or platform.machine(),
        "python": platform.python_version(),
    }
    if clock_resolution_ns is not None:
        env["clock_resolution_ns"] = str(clock_resolution_ns)
    return env


def run_campaign(
    config: MeasurementConfig,
    workload: WorkloadSpec,
    clock=None,
    launch_log: list | None = None,
) -> MeasurementSeries:
    """Run ``config.vms`` sequential executor starts and assemble the series."""
    workloads.check_memory_budget(
        workload,
        iterations=config.warmup_iterations + config.measurement_iterations,
        repetitions=config.repetitions,
    )
    runs = []
    resolution = None
    for vm_index in range(config.vms):
        job = _build_job(config, workload, clock)
        if launch_log is not None:
            launch_log.append({"epoch": vm_index, "members": [("only", vm_index)]})
        result = _finish(_spawn(job), vm_index)
        resolution = result["clock_resolution_ns"] if resolution is None else resolution
        runs.append(
            VmRun(
                vm_index=vm_index,
                warmup_ns=tuple(result["warmup_ns"]),
                measurement_ns=tuple(result["measurement_ns"]),
            )
        )
    return MeasurementSeries(
        config=config,
        workload=workload,
        timestamp=utc_now(),
        environment=_environment_metadata(resolution),
        vm_runs=tuple(runs),
    )


def _pair_affinity() -> tuple[list[int] | None, list[int] | None]:
    if hasattr(os, "sched_getaffinity"):
        cpus = sorted(os.sched_getaffinity(0))
        if len(cpus) >= 2:
            return [cpus[0]], [cpus[1]]
    log.warning("fewer than 2 CPUs available; parallel pair executors run unpinned")
    return None, None


def run_paired_campaign(
    config: MeasurementConfig,
    workload_old: WorkloadSpec,
    workload_new: WorkloadSpec,
    clock=None,
    launch_log: list | None = None,
) -> tuple[MeasurementSeries, MeasurementSeries]:
    """Measure two versions with aligned VM indices.

    With ``config.parallel_pairs`` both versions' executor ``i`` start
    simultaneously and the next pair starts only after both finished;
    otherwise launches alternate old/new sequentially.
    """
    if workload_old.kind is not workload_new.kind:
        raise ValueError("paired campaigns require both workloads to share a kind")
    for workload in (workload_old, workload_new):
        workloads.check_memory_budget(
            workload,
            iterations=config.warmup_iterations + config.measurement_iterations,
            repetitions=config.repetitions,
        )

    runs_old, runs_new = [], []
    resolution = None

    if config.parallel_pairs:
        cpu_old, cpu_new = _pair_affinity()
        for vm_index in range(config.vms):
            if launch_log is not None:
                launch_log.append(
                    {"epoch": vm_index, "members": [("old", vm_index), ("new", vm_index)]}
                )
            proc_old = _spawn(_build_job(config, workload_old, clock, cpu_old))
            proc_new = _spawn(_build_job(config, workload_new, clock, cpu_new))
            result_old = _finish(proc_old, vm_index, "old")
            result_new = _finish(proc_new, vm_index, "new")
            resolution = result_old["clock_resolution_ns"] if resolution is None else resolution
            runs_old.append(
                VmRun(vm_index, tuple(result_old["warmup_ns"]), tuple(result_old["measurement_ns"]))
            )
            runs_new.append(
                VmRun(vm_index, tuple(result_new["warmup_ns"]), tuple(result_new["measurement_ns"]))
            )
    else:
        epoch = 0
        for vm_index in range(config.vms):
            for version, workload, runs in (
                ("old", workload_old, runs_old),
                ("new", workload_new, runs_new),
            ):
                if launch_log is not None:
                    launch_log.append({"epoch": epoch, "members": [(version, vm_index)]})
                epoch += 1
                result = _finish(_spawn(_build_job(config, workload, clock)), vm_index, version)
                resolution = result["clock_resolution_ns"] if resolution is None else resolution
                runs.append(
                    VmRun(vm_index, tuple(result["warmup_ns"]), tuple(result["measurement_ns"]))
                )

    environment = _environment_metadata(resolution)
    timestamp = utc_now()
    series_old = MeasurementSeries(
        config=config,
        workload=workload_old,
        timestamp=timestamp,
        environment=environment,
        vm_runs=tuple(runs_old),
    )
    series_new = MeasurementSeries(
        config=config,
        workload=workload_new,
        timestamp=timestamp,
        environment=environment,
        vm_runs=tuple(runs_new),
    )
    return series_old, series_new
