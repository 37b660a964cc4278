"""Busy-wait regression injection studies at desk scale.

An injection study repeatedly measures a base workload against the same
workload with a busy-wait delay added to each (or a seeded-random subset of)
primitive operation, then reports how often the change detector fires.
Studies with a zero delay estimate the false-positive rate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .harness import CampaignError, run_paired_campaign
from .model import DecisionConfig, MeasurementConfig, MeasurementSeries, WorkloadSpec
from .power import type_ii_error
from .stats import decide, summarize
from .workloads import SplitMix64, busy_wait_ns

#: Default delay grid for studies, anchored at the smallest interesting delta.
DEFAULT_DELTA_GRID_NS = (0, 5, 50, 500)


@dataclass(frozen=True)
class TrialOutcome:
    trial: int
    changed: bool | None
    p_value: float | None
    effect_size: float | None
    error: str | None = None


@dataclass(frozen=True)
class StudyReport:
    workload: WorkloadSpec
    delta_ns: int
    subset_fraction: float
    config: MeasurementConfig
    decision: DecisionConfig
    trials: int
    detections: int
    erroneous: int
    detection_rate: float
    mean_effect_size: float | None
    mean_relative_stddev: float | None
    busywait_quantum_ns: int
    outcomes: tuple[TrialOutcome, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class DetectabilityPrediction:
    gamma_hat: float
    beta: float
    sigma_per_execution_ns: float
    added_ns_per_execution: float


def measure_busywait_quantum() -> int:
    """Smallest wall time a 1 ns busy-wait actually consumes on this host.

    The interesting deltas can sit below clock resolution, so the effective
    quantum is reported with each study instead of being assumed.
    """
    best = None
    for _ in range(200):
        start = time.perf_counter_ns()
        busy_wait_ns(1)
        elapsed = time.perf_counter_ns() - start
        if best is None or elapsed < best:
            best = elapsed
    return best if best is not None else 1


def _trial_seed(seed: int, trial: int) -> int:
    rng = SplitMix64(seed)
    value = rng.next_u64()
    for _ in range(trial):
        value = rng.next_u64()
    return value


def run_injection_study(
    workload: WorkloadSpec,
    delta_ns: int,
    config: MeasurementConfig,
    decision: DecisionConfig,
    trials: int,
    seed: int = 0,
    subset_fraction: float = 1.0,
    clock=None,
    keep_outcomes: bool = True,
) -> StudyReport:
    """Run ``trials`` paired base-vs-injected campaigns and count detections.

    The injected variant differs from the base only in the busy-wait delta
    (same kind, size and per-trial seed).  Erroneous trials are counted
    separately and never enter the detection rate.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if delta_ns < 0:
        raise ValueError("delta_ns must be >= 0")

    detections = 0
    erroneous = 0
    outcomes: list[TrialOutcome] = []
    effect_sizes: list[float] = []
    relative_stddevs: list[float] = []

    for trial in range(trials):
        trial_seed = _trial_seed(seed, trial)
        base_spec = WorkloadSpec(kind=workload.kind, size=workload.size, seed=trial_seed)
        injected_spec = WorkloadSpec(
            kind=workload.kind,
            size=workload.size,
            injected_delay_ns=delta_ns,
            seed=trial_seed,
            delay_subset_fraction=subset_fraction,
        )
        try:
            base, injected = run_paired_campaign(config, base_spec, injected_spec, clock=clock)
            summary_base = summarize(base)
            summary_injected = summarize(injected)
            outcome = decide(
                summary_base.per_vm_means_ns, summary_injected.per_vm_means_ns, decision
            )
        except CampaignError as exc:
            erroneous += 1
            outcomes.append(TrialOutcome(trial, None, None, None, error=str(exc)))
            continue
        if outcome.changed:
            detections += 1
        effect_sizes.append(outcome.effect_size)
        relative_stddevs.append(summary_base.relative_stddev)
        relative_stddevs.append(summary_injected.relative_stddev)
        outcomes.append(
            TrialOutcome(trial, outcome.changed, outcome.p_value, outcome.effect_size)
        )

    completed = trials - erroneous
    return StudyReport(
        workload=workload,
        delta_ns=delta_ns,
        subset_fraction=subset_fraction,
        config=config,
        decision=decision,
        trials=trials,
        detections=detections,
        erroneous=erroneous,
        detection_rate=detections / completed if completed else 0.0,
        mean_effect_size=sum(effect_sizes) / len(effect_sizes) if effect_sizes else None,
        mean_relative_stddev=(
            sum(relative_stddevs) / len(relative_stddevs) if relative_stddevs else None
        ),
        busywait_quantum_ns=measure_busywait_quantum(),
        outcomes=tuple(outcomes) if keep_outcomes else (),
    )


def predict_detectability(
    series_base: MeasurementSeries,
    delta_ns: int,
    config: MeasurementConfig,
    alpha: float = 0.01,
) -> DetectabilityPrediction:
    """Analytic miss probability for a planned injection.

    The added time per execution is size * delta; dividing by the base
    series' per-execution spread gives the expected effect size, which the
    boundary model turns into a Type II error at ``config.vms`` VMs.
    """
    summary = summarize(series_base)
    added = series_base.workload.size * delta_ns
    sigma = summary.stddev_ns
    if sigma == 0:
        gamma_hat = 0.0 if added == 0 else float("inf")
    else:
        gamma_hat = added / sigma
    if gamma_hat == float("inf"):
        beta = 0.0
    else:
        beta = type_ii_error(gamma_hat, config.vms, alpha)
    return DetectabilityPrediction(
        gamma_hat=gamma_hat,
        beta=beta,
        sigma_per_execution_ns=sigma,
        added_ns_per_execution=float(added),
    )


def study_to_document(report: StudyReport) -> dict:
    return {
        "workload": {
            "kind": report.workload.kind.value,
            "size": report.workload.size,
            "seed": report.workload.seed,
        },
        "delta_ns": report.delta_ns,
        "subset_fraction": report.subset_fraction,
        "config": {
            "vms": report.config.vms,
            "warmup_iterations": report.config.warmup_iterations,
            "measurement_iterations": report.config.measurement_iterations,
            "repetitions": report.config.repetitions,
            "trigger_gc_between_iterations": report.config.trigger_gc_between_iterations,
            "parallel_pairs": report.config.parallel_pairs,
        },
        "decision": {
            "test": report.decision.test.value,
            "alpha": report.decision.alpha,
            "outlier_z": report.decision.outlier_z,
        },
        "trials": report.trials,
        "detections": report.detections,
        "erroneous": report.erroneous,
        "detection_rate": report.detection_rate,
        "mean_effect_size": report.mean_effect_size,
        "mean_relative_stddev": report.mean_relative_stddev,
        "busywait_quantum_ns": report.busywait_quantum_ns,
        "outcomes": [
            {
                "trial": o.trial,
                "changed": o.changed,
                "p_value": o.p_value,
                "effect_size": o.effect_size,
                "error": o.error,
            }
            for o in report.outcomes
        ],
    }


def study_summary_csv(reports) -> str:
    lines = ["delta_ns,trials,detections,rate,mean_gamma"]
    for r in reports:
        gamma = "" if r.mean_effect_size is None else repr(r.mean_effect_size)
        lines.append(f"{r.delta_ns},{r.trials},{r.detections},{r.detection_rate!r},{gamma}")
    return "\n".join(lines) + "\n"
