from __future__ import annotations

import os
import sys
from datetime import datetime, timezone

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from perfdelta.model import (
    MeasurementConfig,
    MeasurementSeries,
    VmRun,
    WorkloadKind,
    WorkloadSpec,
)

RUN_HARDWARE = os.environ.get("PERFDELTA_RUN_HARDWARE_TESTS") == "1"

hardware_gated = pytest.mark.skipif(
    not RUN_HARDWARE,
    reason="hardware-timing test; set PERFDELTA_RUN_HARDWARE_TESTS=1 to run",
)


def make_series(
    measurement_ns_per_vm,
    repetitions: int = 1,
    warmup_ns_per_vm=None,
    kind: WorkloadKind = WorkloadKind.ADD,
    size: int = 10,
) -> MeasurementSeries:
    """Assemble a valid series from raw per-VM measurement duration lists."""
    vms = len(measurement_ns_per_vm)
    if warmup_ns_per_vm is None:
        warmup_ns_per_vm = [[] for _ in range(vms)]
    warmup_count = len(warmup_ns_per_vm[0])
    config = MeasurementConfig(
        vms=vms,
        warmup_iterations=warmup_count,
        measurement_iterations=len(measurement_ns_per_vm[0]),
        repetitions=repetitions,
    )
    runs = [
        VmRun(i, tuple(warmup_ns_per_vm[i]), tuple(measurement_ns_per_vm[i]))
        for i in range(vms)
    ]
    return MeasurementSeries(
        config=config,
        workload=WorkloadSpec(kind=kind, size=size),
        timestamp=datetime(2024, 1, 1, tzinfo=timezone.utc),
        environment={"os": "test"},
        vm_runs=tuple(runs),
    )
