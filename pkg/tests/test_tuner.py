import json

import numpy as np
import pytest

from perfdelta import tuner
from perfdelta.executor import FakeClock
from perfdelta.model import DecisionConfig, StatTest, WorkloadKind
from perfdelta.power import type_ii_error
from perfdelta.tuner import (
    F1Grid,
    GridCell,
    TunerPlan,
    estimate_f1,
    grid_to_csv,
    make_synthetic_pool,
    pool_from_series,
    record_pool,
    report_to_document,
    select_configuration,
    tune,
)

MW = DecisionConfig(test=StatTest.MANN_WHITNEY, alpha=0.01)


def small_plan(**overrides):
    base = dict(
        workload_kinds=(WorkloadKind.ADD,),
        size_s=100,
        delta_ops=10,
        repetitions_grid=(1000,),
        vm_grid=(5, 10),
        iteration_grid=(3, 5),
        max_vms=10,
        max_iterations=5,
        resamples=50,
        decision=MW,
        seed=1,
        synthetic_gamma=3.0,
    )
    base.update(overrides)
    return TunerPlan(**base)


def cell(vms, iterations, repetitions, f1):
    return GridCell(vms, iterations, repetitions, f1, tp=0, fp=0, fn=0, tn=0)


# --- plan validation -------------------------------------------------------


def test_plan_invariants():
    with pytest.raises(ValueError):
        small_plan(vm_grid=(50,))
    with pytest.raises(ValueError):
        small_plan(iteration_grid=(50,))
    with pytest.raises(ValueError):
        small_plan(resamples=0)
    with pytest.raises(ValueError):
        small_plan(workload_kinds=())


# --- pools -----------------------------------------------------------------


def test_pool_from_series_layout():
    from conftest import make_series

    base = make_series([[100, 200], [300, 400]], repetitions=10,
                       warmup_ns_per_vm=[[10, 20], [30, 40]])
    changed = make_series([[500, 600], [700, 800]], repetitions=10,
                          warmup_ns_per_vm=[[50, 60], [70, 80]])
    pool = pool_from_series(base, changed)
    assert pool.depth == 4
    assert pool.base[0].tolist() == [1.0, 2.0, 10.0, 20.0]
    assert pool.changed[1].tolist() == [7.0, 8.0, 70.0, 80.0]


def test_pool_rejects_mismatched_repetitions():
    from conftest import make_series

    with pytest.raises(ValueError):
        pool_from_series(
            make_series([[1], [2]], repetitions=10),
            make_series([[1], [2]], repetitions=20),
        )


def test_record_pool_depth_and_persistence(tmp_path):
    plan = small_plan(synthetic_gamma=None, max_vms=2, vm_grid=(2,),
                      iteration_grid=(3,), max_iterations=3, size_s=4)
    pools = record_pool(plan, WorkloadKind.ADD, clock=FakeClock(step_ns=1000),
                        out_dir=tmp_path)
    pool = pools[1000]
    assert pool.base.shape == (2, 6)  # 3 warmup + 3 measurement records
    assert pool.changed.shape == (2, 6)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["pool_add_r1000_base.json", "pool_add_r1000_changed.json"]


def test_synthetic_pool_shape_and_offset():
    pool = make_synthetic_pool(gamma=3.0, vms=40, depth=10, repetitions=100, seed=5)
    assert pool.base.shape == pool.changed.shape == (40, 10)
    assert pool.changed.mean() - pool.base.mean() == pytest.approx(3.0, abs=0.8)


# --- estimate_f1 -----------------------------------------------------------


def test_degenerate_always_changed_decision(monkeypatch):
    class Fixed:
        def __init__(self, changed):
            self.changed = changed

    monkeypatch.setattr(tuner, "decide", lambda old, new, decision: Fixed(True))
    pool = make_synthetic_pool(1.0, 12, 6, 100, seed=2)
    c = estimate_f1(pool, 5, 3, MW, resamples=60, seed=0)
    assert (c.tp, c.fp, c.fn, c.tn) == (60, 60, 0, 0)
    assert c.f1 == pytest.approx(2 / 3)

    monkeypatch.setattr(tuner, "decide", lambda old, new, decision: Fixed(False))
    c = estimate_f1(pool, 5, 3, MW, resamples=60, seed=0)
    assert (c.tp, c.fp, c.fn, c.tn) == (0, 0, 60, 60)
    assert c.f1 == 0.0


def test_f1_arithmetic_for_counts():
    assert tuner._f1_score(99, 1, 1) == pytest.approx(0.99)
    assert tuner._f1_score(0, 0, 0) == 0.0


def test_counter_conservation():
    pool = make_synthetic_pool(1.0, 20, 8, 100, seed=3)
    c = estimate_f1(pool, 8, 4, MW, resamples=40, seed=7)
    assert c.tp + c.fn == 40
    assert c.fp + c.tn == 40


def test_strong_effect_reaches_threshold():
    pool = make_synthetic_pool(3.0, 60, 20, 1000, seed=1)
    c = estimate_f1(pool, 30, 10, MW, resamples=500, seed=1)
    assert c.f1 >= 0.99


def test_estimate_f1_bounds():
    pool = make_synthetic_pool(1.0, 10, 6, 100, seed=4)
    with pytest.raises(ValueError):
        estimate_f1(pool, 11, 3, MW, resamples=5, seed=0)
    with pytest.raises(ValueError):
        estimate_f1(pool, 5, 4, MW, resamples=5, seed=0)


def test_estimate_f1_deterministic():
    pool = make_synthetic_pool(1.5, 20, 8, 100, seed=9)
    a = estimate_f1(pool, 8, 4, MW, resamples=80, seed=13)
    b = estimate_f1(pool, 8, 4, MW, resamples=80, seed=13)
    assert a == b


def test_f1_nondecreasing_in_vms_with_slack():
    pool = make_synthetic_pool(1.2, 60, 8, 100, seed=21)
    f1s = [
        estimate_f1(pool, vms, 4, MW, resamples=400, seed=21).f1
        for vms in (5, 10, 20, 30)
    ]
    for smaller, larger in zip(f1s, f1s[1:]):
        assert larger >= smaller - 0.02, f1s


# --- selection rules -------------------------------------------------------


def test_selection_prefers_lower_cost_product():
    grid = F1Grid(cells=(
        cell(30, 49, 100_000, 0.995),
        cell(30, 49, 10_000, 0.992),
    ))
    result = select_configuration(grid)
    assert result.feasible
    assert result.cell.repetitions == 10_000  # 49*10k beats 49*100k


def test_selection_tie_broken_by_larger_repetitions():
    grid = F1Grid(cells=(
        cell(30, 490, 10_000, 0.995),
        cell(30, 49, 100_000, 0.992),
    ))
    result = select_configuration(grid)
    assert result.cell.repetitions == 100_000


def test_selection_minimizes_vms_first():
    grid = F1Grid(cells=(
        cell(10, 49, 100_000, 0.991),
        cell(30, 5, 10, 0.999),
    ))
    assert select_configuration(grid).cell.vms == 10


def test_selection_no_feasible_cell():
    grid = F1Grid(cells=(cell(10, 10, 100, 0.5), cell(20, 10, 100, 0.9)))
    result = select_configuration(grid)
    assert not result.feasible
    assert result.config is None
    assert result.cell.f1 == 0.9  # best found, for diagnostics


def test_selection_monotonicity_rule_excludes_unstable_cell():
    grid = F1Grid(cells=(
        cell(10, 10, 100, 0.995),
        cell(10, 20, 100, 0.95),  # large drop disqualifies the 10-iteration cell
        cell(20, 10, 100, 0.995),
        cell(20, 20, 100, 0.993),
    ))
    result = select_configuration(grid)
    assert result.cell.vms == 20
    assert result.cell.iterations == 10


def test_selection_order_independent():
    cells = (
        cell(10, 10, 100, 0.991),
        cell(10, 20, 100, 0.992),
        cell(20, 10, 100, 0.999),
        cell(20, 20, 1000, 0.995),
    )
    baseline = select_configuration(F1Grid(cells=cells))
    for shift in range(1, len(cells)):
        permuted = F1Grid(cells=cells[shift:] + cells[:shift])
        assert select_configuration(permuted).cell == baseline.cell


def test_selected_config_mirrors_cell():
    grid = F1Grid(cells=(cell(30, 49, 100_000, 0.995),))
    config = select_configuration(grid).config
    assert config.vms == 30
    assert config.warmup_iterations == config.measurement_iterations == 49
    assert config.repetitions == 100_000


# --- tune ------------------------------------------------------------------


def test_tune_grid_dimensions_and_csv():
    plan = small_plan()
    report = tune(plan)
    expected = len(plan.vm_grid) * len(plan.iteration_grid) * len(plan.repetitions_grid)
    assert len(report.average_grid.cells) == expected
    assert set(report.per_workload_grids) == {"add"}
    csv_lines = grid_to_csv(report.average_grid).strip().splitlines()
    assert len(csv_lines) == expected + 1


def test_tune_deterministic_documents():
    a = report_to_document(tune(small_plan()))
    b = report_to_document(tune(small_plan()))
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_tune_selection_consistent_with_analytic_power():
    plan = small_plan(resamples=200)
    report = tune(plan)
    assert report.selection.feasible
    beta = type_ii_error(plan.synthetic_gamma, report.selection.config.vms, MW.alpha)
    assert beta <= 0.01


def test_average_grid_combines_workloads():
    plan = small_plan(workload_kinds=(WorkloadKind.ADD, WorkloadKind.WRITE))
    report = tune(plan)
    assert set(report.per_workload_grids) == {"add", "write"}
    first_avg = report.average_grid.cells[0]
    parts = [g.cells[0] for g in report.per_workload_grids.values()]
    assert first_avg.f1 == pytest.approx(np.mean([p.f1 for p in parts]))
    assert first_avg.tp == sum(p.tp for p in parts)
