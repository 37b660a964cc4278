"""The three calibration workloads: add, allocate, write.

Each workload performs exactly ``spec.size`` primitive operations per
execution and feeds its accumulated state through an opaque consumption
point when drained, so the work cannot be elided by an optimizer.

Randomness comes from a SplitMix64 generator so streams are reproducible
across implementations.  The exact recurrence (all arithmetic mod 2**64):

    state    = state + 0x9E3779B97F4A7C15
    z        = state
    z        = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z        = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output   = z ^ (z >> 31)
"""

from __future__ import annotations

import io
import os
import sys
import time
from typing import TextIO

import numpy as np

from .model import WorkloadKind, WorkloadSpec

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_SUBSET_SEED_SALT = 0xD1B54A32D192ED03

#: Assumed footprint of one allocated record (three machine integers).
RECORD_BYTES = 24

MEM_BUDGET_ENV_VAR = "PERFDELTA_MEM_BUDGET_BYTES"


class MemoryBudgetError(ValueError):
    """An allocate workload would exceed the configured memory budget."""


class SplitMix64:
    """64-bit shift-based PRNG; see the module docstring for the recurrence."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_block(self, n: int) -> np.ndarray:
        """The next ``n`` outputs as a uint64 array (same stream as next_u64)."""
        base = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GOLDEN) + np.uint64(self._state)
        self._state = (self._state + n * _GOLDEN) & _MASK64
        z = base
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def next_unit_float(self) -> float:
        return (self.next_u64() >> 11) / float(1 << 53)


def busy_wait_ns(delay_ns: int) -> None:
    """Spin on the monotonic clock until ``delay_ns`` have elapsed.

    Sleeping is not an option: the interesting deltas (5 ns) are far below
    sleep granularity.  This always performs at least two clock reads.
    """
    deadline = time.perf_counter_ns() + delay_ns
    while time.perf_counter_ns() < deadline:
        pass


# The opaque consumption point: all sinks are folded into this checksum on
# drain, so the loops feeding them are observable side effects.
_OPAQUE_CHECKSUM = 0


def _consume(value: int) -> None:
    global _OPAQUE_CHECKSUM
    _OPAQUE_CHECKSUM = (_OPAQUE_CHECKSUM ^ value) & _MASK64


def opaque_checksum() -> int:
    return _OPAQUE_CHECKSUM


class WorkloadInstance:
    """One confined workload executor; not safe to share across threads.

    Two instances built from equal specs (including seed) perform the
    identical operation sequence.
    """

    def __init__(self, spec: WorkloadSpec):
        self.spec = spec
        self._rng = SplitMix64(spec.seed)
        self._delay_mask = self._build_delay_mask()

    def _build_delay_mask(self) -> list[bool] | None:
        if self.spec.injected_delay_ns == 0:
            return None
        fraction = self.spec.delay_subset_fraction
        if fraction >= 1.0:
            return [True] * self.spec.size
        picker = SplitMix64(self.spec.seed ^ _SUBSET_SEED_SALT)
        return [picker.next_unit_float() < fraction for _ in range(self.spec.size)]

    def execute_once(self) -> None:
        raise NotImplementedError

    def run_repetitions(self, n: int) -> None:
        """Execute the workload ``n`` times; semantics identical to a loop."""
        for _ in range(n):
            self.execute_once()

    def drain(self) -> None:
        """Empty the sink through the opaque consumption point (idempotent)."""
        raise NotImplementedError


class AddWorkload(WorkloadInstance):
    """Sum ``size`` pseudo-random numbers into the sink (mod 2**64)."""

    def __init__(self, spec: WorkloadSpec):
        super().__init__(spec)
        self._sum = 0

    @property
    def sink_value(self) -> int:
        return self._sum

    def execute_once(self) -> None:
        if self._delay_mask is None:
            self._add_draws(self.spec.size)
        else:
            delay = self.spec.injected_delay_ns
            for delayed in self._delay_mask:
                self._sum = (self._sum + self._rng.next_u64()) & _MASK64
                if delayed:
                    busy_wait_ns(delay)

    def _add_draws(self, total: int) -> None:
        # Chunked so temporaries stay cache-resident regardless of size.
        acc = self._sum
        chunk = 1 << 13
        while total > 0:
            take = min(chunk, total)
            acc = (acc + int(self._rng.next_block(take).sum(dtype=np.uint64))) & _MASK64
            total -= take
        self._sum = acc

    def run_repetitions(self, n: int) -> None:
        if self._delay_mask is not None:
            super().run_repetitions(n)
            return
        # Fast path: one execution per `size` draws, batched across repetitions.
        self._add_draws(n * self.spec.size)

    def drain(self) -> None:
        _consume(self._sum)
        self._sum = 0


class AllocateWorkload(WorkloadInstance):
    """Allocate ``size`` fresh three-integer records, retained until drain."""

    def __init__(self, spec: WorkloadSpec):
        super().__init__(spec)
        self._records: list[list[int]] = []

    @property
    def record_count(self) -> int:
        return len(self._records)

    def execute_once(self) -> None:
        append = self._records.append
        if self._delay_mask is None:
            for _ in range(self.spec.size):
                append([0, 0, 0])
        else:
            delay = self.spec.injected_delay_ns
            for delayed in self._delay_mask:
                append([0, 0, 0])
                if delayed:
                    busy_wait_ns(delay)

    def drain(self) -> None:
        _consume(len(self._records))
        self._records.clear()


class WriteWorkload(WorkloadInstance):
    """Generate ``size`` pseudo-random numbers and write their text form.

    The sink defaults to an in-memory buffer; pass ``target="stdout"`` to
    mirror writing to standard output (timing then depends on the terminal).
    """

    def __init__(self, spec: WorkloadSpec, target: str = "memory"):
        super().__init__(spec)
        self._count = 0
        self._owns_buffer = target == "memory"
        self._writer: TextIO = io.StringIO() if self._owns_buffer else sys.stdout

    @property
    def written_count(self) -> int:
        return self._count

    def execute_once(self) -> None:
        write = self._writer.write
        if self._delay_mask is None:
            block = self._rng.next_block(self.spec.size)
            write("\n".join(str(int(v)) for v in block))
            write("\n")
        else:
            delay = self.spec.injected_delay_ns
            for delayed in self._delay_mask:
                write(f"{self._rng.next_u64()}\n")
                if delayed:
                    busy_wait_ns(delay)
        self._count += self.spec.size

    def drain(self) -> None:
        _consume(self._count)
        self._count = 0
        if self._owns_buffer:
            self._writer = io.StringIO()
        else:
            self._writer.flush()


def create_instance(spec: WorkloadSpec, write_target: str = "memory") -> WorkloadInstance:
    if spec.kind is WorkloadKind.ADD:
        return AddWorkload(spec)
    if spec.kind is WorkloadKind.ALLOCATE:
        return AllocateWorkload(spec)
    if spec.kind is WorkloadKind.WRITE:
        return WriteWorkload(spec, target=write_target)
    raise ValueError(f"unknown workload kind: {spec.kind}")


def drain_sink(instance: WorkloadInstance) -> None:
    """Empty the instance's sink between iterations; repeated calls are no-ops."""
    instance.drain()


def _physical_ram_bytes() -> int:
    try:
        return os.sysconf("SC_PHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return 8 * 1024**3  # conservative fallback when the OS hides RAM size


def default_memory_budget() -> int:
    """25 % of physical RAM, overridable via PERFDELTA_MEM_BUDGET_BYTES."""
    override = os.environ.get(MEM_BUDGET_ENV_VAR)
    if override:
        return int(override)
    return _physical_ram_bytes() // 4


def check_memory_budget(
    spec: WorkloadSpec,
    iterations: int,
    repetitions: int,
    budget_bytes: int | None = None,
) -> None:
    """Reject allocate campaigns whose retained records would exceed the budget.

    The bound is size * iterations * repetitions records of RECORD_BYTES each.
    """
    if spec.kind is not WorkloadKind.ALLOCATE:
        return
    if budget_bytes is None:
        budget_bytes = default_memory_budget()
    needed = spec.size * iterations * repetitions * RECORD_BYTES
    if needed > budget_bytes:
        raise MemoryBudgetError(
            f"allocate workload needs ~{needed} bytes "
            f"(size={spec.size} x iterations={iterations} x repetitions={repetitions} "
            f"x {RECORD_BYTES} B/record) but the budget is {budget_bytes} bytes"
        )
