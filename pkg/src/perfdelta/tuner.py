"""Measurement-configuration tuning by resampled F1-scores.

A recorded pool holds, per repetitions value, per-repetition duration
streams for a base workload (size s) and a changed workload (size s+d or
injected delay).  For every (vms, iterations, repetitions) cell the change
detector's F1-score is estimated by repeated resampling: changed-pair trials
count true positives and false negatives, same-version trials count false
positives and true negatives.  The best configuration is then selected by
threshold, monotonicity and repetition-count rules.

A configuration with iteration count i consumes recorded iterations 1..2i of
each drawn VM's stream and discards the first i as warmup, mirroring the
equal-warmup policy the harness applies when measuring for real.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .model import DecisionConfig, MeasurementConfig, MeasurementSeries, WorkloadKind, WorkloadSpec
from .stats import decide

#: Resampling noise at 10,000 rounds is ~±0.005 F1; the monotonicity rule
#: tolerates dips up to this much.
MONOTONICITY_TOLERANCE = 0.005

F1_THRESHOLD = 0.99


@dataclass(frozen=True)
class TunerPlan:
    """Everything needed to record pools and evaluate the configuration grid."""

    workload_kinds: tuple[WorkloadKind, ...]
    size_s: int
    delta_ops: int = 0
    delta_ns: int = 0
    repetitions_grid: tuple[int, ...] = (1000,)
    vm_grid: tuple[int, ...] = (10, 20, 30)
    iteration_grid: tuple[int, ...] = (10, 20, 30)
    max_vms: int = 30
    max_iterations: int = 30
    resamples: int = 10_000
    decision: DecisionConfig = field(default_factory=DecisionConfig)
    seed: int = 0
    synthetic_gamma: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "workload_kinds", tuple(self.workload_kinds))
        object.__setattr__(self, "repetitions_grid", tuple(self.repetitions_grid))
        object.__setattr__(self, "vm_grid", tuple(self.vm_grid))
        object.__setattr__(self, "iteration_grid", tuple(self.iteration_grid))
        if not self.workload_kinds:
            raise ValueError("plan needs at least one workload kind")
        if max(self.vm_grid) > self.max_vms:
            raise ValueError("vm_grid exceeds max_vms")
        if max(self.iteration_grid) > self.max_iterations:
            raise ValueError("iteration_grid exceeds max_iterations")
        if self.resamples < 1:
            raise ValueError("resamples must be >= 1")
        if self.delta_ops < 0 or self.delta_ns < 0:
            raise ValueError("deltas must be >= 0")


@dataclass(frozen=True)
class GridCell:
    vms: int
    iterations: int
    repetitions: int
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass(frozen=True)
class F1Grid:
    cells: tuple[GridCell, ...]

    def cell(self, vms: int, iterations: int, repetitions: int) -> GridCell:
        for c in self.cells:
            if (c.vms, c.iterations, c.repetitions) == (vms, iterations, repetitions):
                return c
        raise KeyError((vms, iterations, repetitions))


@dataclass(frozen=True)
class SelectionResult:
    """Selected configuration, or the best-found cell when nothing qualifies."""

    config: MeasurementConfig | None
    cell: GridCell | None
    feasible: bool
    reason: str


@dataclass
class MeasurementPool:
    """Per-repetition duration streams, shape (vms, recorded_depth)."""

    base: np.ndarray
    changed: np.ndarray
    repetitions: int

    @property
    def depth(self) -> int:
        return self.base.shape[1]


@dataclass
class TunerReport:
    plan: TunerPlan
    per_workload_grids: dict[str, F1Grid]
    average_grid: F1Grid
    selection: SelectionResult
    wall_time_seconds: float


def _f1_score(tp: int, fp: int, fn: int) -> float:
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator else 0.0


def pool_from_series(base: MeasurementSeries, changed: MeasurementSeries) -> MeasurementPool:
    """Build a pool from two recorded series (warmup stream kept in front)."""
    if base.config.repetitions != changed.config.repetitions:
        raise ValueError("base and changed series must share a repetitions count")

    def matrix(series: MeasurementSeries) -> np.ndarray:
        rows = [list(run.warmup_ns) + list(run.measurement_ns) for run in series.vm_runs]
        return np.asarray(rows, dtype=np.float64) / series.config.repetitions

    return MeasurementPool(
        base=matrix(base), changed=matrix(changed), repetitions=base.config.repetitions
    )


def make_synthetic_pool(
    gamma: float,
    vms: int,
    depth: int,
    repetitions: int,
    seed: int,
    base_mean: float = 100.0,
    between_vm_sd: float = 1.0,
    within_vm_sd: float = 0.1,
) -> MeasurementPool:
    """Gaussian stand-in for a recorded pool with a controlled effect size.

    Per-VM means are Normal(mean, between_vm_sd); the changed version is
    slower by ``gamma * between_vm_sd``.  Iteration values add small
    within-VM noise so per-VM averaging still does something.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, vms, depth, repetitions]))

    def draw(mean: float) -> np.ndarray:
        vm_means = rng.normal(mean, between_vm_sd, size=(vms, 1))
        return vm_means + rng.normal(0.0, within_vm_sd, size=(vms, depth))

    return MeasurementPool(
        base=draw(base_mean),
        changed=draw(base_mean + gamma * between_vm_sd),
        repetitions=repetitions,
    )


def record_pool(
    plan: TunerPlan,
    kind: WorkloadKind,
    clock=None,
    out_dir=None,
) -> dict[int, MeasurementPool]:
    """Measure base and changed workloads at the maximal configuration.

    Runs the harness at ``max_vms`` VMs with ``max(iteration_grid)`` warmup
    plus measurement iterations for each repetitions value, so every
    sub-configuration can be resampled from the recording.  Series files are
    persisted under ``out_dir`` when given.
    """
    from .harness import CampaignError, run_paired_campaign
    from .model import serialize_series

    max_i = max(plan.iteration_grid)
    base_spec = WorkloadSpec(kind=kind, size=plan.size_s, seed=plan.seed)
    changed_spec = WorkloadSpec(
        kind=kind,
        size=plan.size_s + plan.delta_ops,
        injected_delay_ns=plan.delta_ns,
        seed=plan.seed,
    )
    pools: dict[int, MeasurementPool] = {}
    for repetitions in plan.repetitions_grid:
        config = MeasurementConfig(
            vms=plan.max_vms,
            warmup_iterations=max_i,
            measurement_iterations=max_i,
            repetitions=repetitions,
        )
        try:
            base, changed = run_paired_campaign(config, base_spec, changed_spec, clock=clock)
        except CampaignError as exc:
            raise CampaignError(
                exc.vm_index,
                f"recording pool for kind={kind.value} repetitions={repetitions}: "
                f"{exc.diagnostics}",
                exc.version,
            ) from exc
        if out_dir is not None:
            from pathlib import Path

            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            for label, series in (("base", base), ("changed", changed)):
                path = out / f"pool_{kind.value}_r{repetitions}_{label}.json"
                path.write_bytes(serialize_series(series))
        pools[repetitions] = pool_from_series(base, changed)
    return pools


def _round_rng(seed: int, vms: int, iterations: int, repetitions: int, round_idx: int):
    return np.random.default_rng(
        np.random.SeedSequence([seed, vms, iterations, repetitions, round_idx])
    )


def estimate_f1(
    pool: MeasurementPool,
    vms: int,
    iterations: int,
    decision: DecisionConfig,
    resamples: int,
    seed: int,
) -> GridCell:
    """Resample the pool and count the detector's confusion matrix.

    Per round, a changed-pair trial draws ``vms`` VMs without replacement
    from each version's pool, and a same-version trial draws two disjoint
    subsets from the base pool (independent subsets when the pool is too
    shallow for disjoint ones).
    """
    n_base = pool.base.shape[0]
    n_changed = pool.changed.shape[0]
    if vms > n_base or vms > n_changed:
        raise ValueError(f"cell needs {vms} VMs but the pool holds {n_base}/{n_changed}")
    if 2 * iterations > pool.depth:
        raise ValueError(
            f"cell needs {2 * iterations} recorded iterations but the pool holds {pool.depth}"
        )

    # Mean of recorded iterations i..2i-1 per VM, via prefix sums.
    def per_vm_values(matrix: np.ndarray) -> np.ndarray:
        prefix = np.cumsum(matrix, axis=1)
        upper = prefix[:, 2 * iterations - 1]
        lower = prefix[:, iterations - 1]
        return (upper - lower) / iterations

    base_values = per_vm_values(pool.base)
    changed_values = per_vm_values(pool.changed)

    tp = fp = fn = tn = 0
    for round_idx in range(resamples):
        rng = _round_rng(seed, vms, iterations, pool.repetitions, round_idx)

        idx_old = rng.choice(n_base, size=vms, replace=False)
        idx_new = rng.choice(n_changed, size=vms, replace=False)
        outcome = decide(base_values[idx_old], changed_values[idx_new], decision)
        if outcome.changed:
            tp += 1
        else:
            fn += 1

        if n_base >= 2 * vms:
            perm = rng.permutation(n_base)
            first, second = perm[:vms], perm[vms : 2 * vms]
        else:
            first = rng.choice(n_base, size=vms, replace=False)
            second = rng.choice(n_base, size=vms, replace=False)
        outcome = decide(base_values[first], base_values[second], decision)
        if outcome.changed:
            fp += 1
        else:
            tn += 1

    return GridCell(
        vms=vms,
        iterations=iterations,
        repetitions=pool.repetitions,
        f1=_f1_score(tp, fp, fn),
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
    )


def select_configuration(
    grid: F1Grid,
    f1_threshold: float = F1_THRESHOLD,
    monotonicity_tolerance: float = MONOTONICITY_TOLERANCE,
    parallel_pairs: bool = False,
) -> SelectionResult:
    """Apply the three selection rules to a grid.

    A cell qualifies when (1) its F1 meets the threshold and (2) no cell with
    the same VM and repetition counts but more iterations scores lower by
    more than the tolerance.  Among qualifiers the cell with the fewest VMs
    wins, then the smallest iterations*repetitions product, then the larger
    repetition count.
    """
    if not grid.cells:
        return SelectionResult(None, None, False, "empty grid")

    def monotone_safe(cell: GridCell) -> bool:
        return all(
            other.f1 >= cell.f1 - monotonicity_tolerance
            for other in grid.cells
            if other.vms == cell.vms
            and other.repetitions == cell.repetitions
            and other.iterations > cell.iterations
        )

    qualifiers = [c for c in grid.cells if c.f1 >= f1_threshold and monotone_safe(c)]
    best_overall = max(grid.cells, key=lambda c: c.f1)
    if not qualifiers:
        return SelectionResult(
            None, best_overall, False, f"no cell reaches F1 >= {f1_threshold}"
        )

    chosen = min(
        qualifiers,
        key=lambda c: (c.vms, c.iterations * c.repetitions, -c.repetitions, c.iterations),
    )
    config = MeasurementConfig(
        vms=chosen.vms,
        warmup_iterations=chosen.iterations,
        measurement_iterations=chosen.iterations,
        repetitions=chosen.repetitions,
        parallel_pairs=parallel_pairs,
    )
    return SelectionResult(config, chosen, True, "selected")


def _estimate_grid(
    pools: dict[int, MeasurementPool], plan: TunerPlan
) -> F1Grid:
    cells = []
    for repetitions in plan.repetitions_grid:
        pool = pools[repetitions]
        for vms in plan.vm_grid:
            for iterations in plan.iteration_grid:
                cells.append(
                    estimate_f1(
                        pool, vms, iterations, plan.decision, plan.resamples, plan.seed
                    )
                )
    return F1Grid(cells=tuple(cells))


def _average_grids(grids: list[F1Grid]) -> F1Grid:
    """Average F1 across workloads cell-by-cell; counts are summed."""
    cells = []
    for group in zip(*(g.cells for g in grids)):
        first = group[0]
        cells.append(
            GridCell(
                vms=first.vms,
                iterations=first.iterations,
                repetitions=first.repetitions,
                f1=sum(c.f1 for c in group) / len(group),
                tp=sum(c.tp for c in group),
                fp=sum(c.fp for c in group),
                fn=sum(c.fn for c in group),
                tn=sum(c.tn for c in group),
            )
        )
    return F1Grid(cells=tuple(cells))


def tune(
    plan: TunerPlan,
    clock=None,
    out_dir=None,
    parallel_pairs: bool = False,
    synthetic_pool_vms: int | None = None,
) -> TunerReport:
    """Record (or synthesize) pools, estimate the full grid, select the best cell."""
    started = time.perf_counter()
    per_workload: dict[str, F1Grid] = {}
    for kind in plan.workload_kinds:
        if plan.synthetic_gamma is not None:
            pool_vms = synthetic_pool_vms or max(plan.max_vms, 2 * max(plan.vm_grid))
            pools = {
                repetitions: make_synthetic_pool(
                    gamma=plan.synthetic_gamma,
                    vms=pool_vms,
                    depth=2 * max(plan.iteration_grid),
                    repetitions=repetitions,
                    seed=plan.seed,
                )
                for repetitions in plan.repetitions_grid
            }
        else:
            pools = record_pool(plan, kind, clock=clock, out_dir=out_dir)
        per_workload[kind.value] = _estimate_grid(pools, plan)

    average = _average_grids(list(per_workload.values()))
    selection = select_configuration(average, parallel_pairs=parallel_pairs)
    return TunerReport(
        plan=plan,
        per_workload_grids=per_workload,
        average_grid=average,
        selection=selection,
        wall_time_seconds=time.perf_counter() - started,
    )


def grid_to_csv(grid: F1Grid) -> str:
    lines = ["vms,iterations,repetitions,f1,tp,fp,fn,tn"]
    lines += [
        f"{c.vms},{c.iterations},{c.repetitions},{c.f1!r},{c.tp},{c.fp},{c.fn},{c.tn}"
        for c in grid.cells
    ]
    return "\n".join(lines) + "\n"


def report_to_document(report: TunerReport, include_wall_time: bool = False) -> dict:
    """JSON-ready view of a report.

    Wall time is excluded by default so report files are byte-identical
    across reruns with the same seed.
    """
    plan = report.plan
    doc = {
        "plan": {
            "workload_kinds": [k.value for k in plan.workload_kinds],
            "size_s": plan.size_s,
            "delta_ops": plan.delta_ops,
            "delta_ns": plan.delta_ns,
            "repetitions_grid": list(plan.repetitions_grid),
            "vm_grid": list(plan.vm_grid),
            "iteration_grid": list(plan.iteration_grid),
            "max_vms": plan.max_vms,
            "max_iterations": plan.max_iterations,
            "resamples": plan.resamples,
            "decision": {
                "test": plan.decision.test.value,
                "alpha": plan.decision.alpha,
                "outlier_z": plan.decision.outlier_z,
            },
            "seed": plan.seed,
            "synthetic_gamma": plan.synthetic_gamma,
        },
        "selection": {
            "feasible": report.selection.feasible,
            "reason": report.selection.reason,
            "config": None,
            "cell": None,
        },
    }
    if report.selection.config is not None:
        cfg = report.selection.config
        doc["selection"]["config"] = {
            "vms": cfg.vms,
            "warmup_iterations": cfg.warmup_iterations,
            "measurement_iterations": cfg.measurement_iterations,
            "repetitions": cfg.repetitions,
            "trigger_gc_between_iterations": cfg.trigger_gc_between_iterations,
            "parallel_pairs": cfg.parallel_pairs,
        }
    if report.selection.cell is not None:
        cell = report.selection.cell
        doc["selection"]["cell"] = {
            "vms": cell.vms,
            "iterations": cell.iterations,
            "repetitions": cell.repetitions,
            "f1": cell.f1,
            "tp": cell.tp,
            "fp": cell.fp,
            "fn": cell.fn,
            "tn": cell.tn,
        }
    if include_wall_time:
        doc["wall_time_seconds"] = report.wall_time_seconds
    return doc
