import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from conftest import make_series
from perfdelta.cli import main
from perfdelta.model import deserialize_series, serialize_series

runner = CliRunner()


def write_series(path: Path, per_vm_means):
    series = make_series([[int(v)] for v in per_vm_means], repetitions=1)
    path.write_bytes(serialize_series(series))


# --- measure ---------------------------------------------------------------


def test_measure_writes_valid_series(tmp_path):
    out = tmp_path / "f.json"
    result = runner.invoke(main, [
        "measure", "--workload", "add", "--size", "300", "--vms", "2",
        "--warmup", "2", "--iterations", "2", "--repetitions", "10",
        "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    series = deserialize_series(out.read_bytes())
    assert len(series.vm_runs) == 2
    assert all(len(r.measurement_ns) == 2 for r in series.vm_runs)
    assert "mean_ns=" in result.output


def test_measure_requires_out():
    result = runner.invoke(main, ["measure", "--workload", "add", "--size", "300"])
    assert result.exit_code == 2


def test_measure_validation_exit_code(tmp_path):
    result = runner.invoke(main, [
        "measure", "--workload", "add", "--size", "0", "--out", str(tmp_path / "f.json"),
    ])
    assert result.exit_code == 2


def test_measure_allocate_budget_refusal(tmp_path):
    result = runner.invoke(main, [
        "measure", "--workload", "allocate", "--size", "10000000",
        "--vms", "2", "--warmup", "1", "--iterations", "1",
        "--repetitions", "1000", "--out", str(tmp_path / "f.json"),
    ], env={"PERFDELTA_MEM_BUDGET_BYTES": "1000000"})
    assert result.exit_code == 2
    assert "budget" in result.stderr.lower()
    assert not (tmp_path / "f.json").exists()


# --- compare ---------------------------------------------------------------


def test_compare_identical_series_exit_zero(tmp_path):
    write_series(tmp_path / "a.json", [1, 2, 3])
    write_series(tmp_path / "b.json", [1, 2, 3])
    result = runner.invoke(main, [
        "compare", str(tmp_path / "a.json"), str(tmp_path / "b.json"),
    ])
    assert result.exit_code == 0
    doc = json.loads(result.stdout)  # stdout must be a single JSON document
    assert doc["changed"] is False
    assert doc["p_value"] == 1.0


def test_compare_enumeration_example_alpha_boundary(tmp_path):
    write_series(tmp_path / "old.json", [1, 2, 3])
    write_series(tmp_path / "new.json", [10, 11, 12])
    args = ["compare", str(tmp_path / "old.json"), str(tmp_path / "new.json"),
            "--test", "mann-whitney"]

    result = runner.invoke(main, args + ["--alpha", "0.01"])
    assert result.exit_code == 0
    assert json.loads(result.output)["p_value"] == pytest.approx(0.1)

    result = runner.invoke(main, args + ["--alpha", "0.2"])
    assert result.exit_code == 10
    assert json.loads(result.output)["changed"] is True


def test_compare_missing_file_exit_two(tmp_path):
    write_series(tmp_path / "a.json", [1, 2, 3])
    result = runner.invoke(main, [
        "compare", str(tmp_path / "a.json"), str(tmp_path / "missing.json"),
    ])
    assert result.exit_code == 2


def test_compare_corrupt_file_exit_two(tmp_path):
    write_series(tmp_path / "a.json", [1, 2, 3])
    (tmp_path / "bad.json").write_text("{broken")
    result = runner.invoke(main, [
        "compare", str(tmp_path / "a.json"), str(tmp_path / "bad.json"),
    ])
    assert result.exit_code == 2


# --- power -----------------------------------------------------------------


def test_power_forward_anchor():
    result = runner.invoke(main, ["power", "--gamma", "1", "--alpha", "0.01", "--vms", "30"])
    assert result.exit_code == 0
    beta = float(result.output.strip().split("=")[1])
    assert beta == pytest.approx(0.0973, abs=0.0005)


def test_power_zero_gamma():
    result = runner.invoke(main, ["power", "--gamma", "0", "--alpha", "0.01", "--vms", "30"])
    assert result.exit_code == 0
    assert float(result.output.strip().split("=")[1]) == pytest.approx(0.995)


def test_power_inversion_anchor():
    result = runner.invoke(main, ["power", "--gamma", "0.1", "--alpha", "0.01", "--beta", "0.01"])
    assert result.exit_code == 0
    required = int(result.output.strip().split("=")[1])
    assert 4806 <= required <= 4808


def test_power_requires_exactly_one_direction():
    result = runner.invoke(main, ["power", "--gamma", "1", "--vms", "30", "--beta", "0.1"])
    assert result.exit_code == 2
    result = runner.invoke(main, ["power", "--gamma", "1"])
    assert result.exit_code == 2


def test_power_feasibility_output():
    result = runner.invoke(main, [
        "power", "--gamma", "0.5", "--alpha", "0.01", "--beta", "0.01",
        "--seconds-per-vm", "97", "--budget", "43200",
    ])
    assert result.exit_code == 0
    assert "required_vms=193" in result.output
    assert "feasible=true" in result.output


def test_power_curve_csv(tmp_path):
    out = tmp_path / "curve.csv"
    result = runner.invoke(main, [
        "power", "curve", "--gammas", "1,0.5", "--vms-min", "2", "--vms-max", "10",
        "--out", str(out),
    ])
    assert result.exit_code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "gamma,vms,alpha,beta"
    assert len(lines) == 1 + 2 * 9


# --- tune ------------------------------------------------------------------

TUNE_ARGS = [
    "tune", "--workload", "add", "--size", "300", "--delta", "1",
    "--vm-grid", "5,10", "--iteration-grid", "3,5", "--repetitions-grid", "1000",
    "--synthetic", "gamma=3", "--resamples", "200", "--seed", "7",
]


def test_tune_synthetic_outputs(tmp_path):
    out = tmp_path / "tuneout"
    result = runner.invoke(main, TUNE_ARGS + ["--out", str(out)])
    assert result.exit_code == 0, result.output
    assert (out / "heatmap_add.csv").exists()
    assert (out / "heatmap_average.csv").exists()
    report = json.loads((out / "report.json").read_text())
    assert report["selection"]["feasible"] is True
    assert "wall_time_seconds" not in report
    assert "wall_time_seconds=" in result.stderr
    assert "wall_time_seconds=" not in result.stdout
    rows = (out / "heatmap_add.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 2 * 2  # header + |vm_grid| * |iteration_grid|


def test_tune_synthetic_reruns_byte_identical(tmp_path):
    first, second = tmp_path / "one", tmp_path / "two"
    assert runner.invoke(main, TUNE_ARGS + ["--out", str(first)]).exit_code == 0
    assert runner.invoke(main, TUNE_ARGS + ["--out", str(second)]).exit_code == 0
    for name in ("heatmap_add.csv", "heatmap_average.csv", "report.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_tune_rejects_malformed_synthetic(tmp_path):
    result = runner.invoke(main, [
        "tune", "--workload", "add", "--synthetic", "3",
        "--out", str(tmp_path / "x"),
    ])
    assert result.exit_code == 2


# --- stddev-sweep ----------------------------------------------------------


def test_stddev_sweep_rows_and_recomputation(tmp_path):
    out = tmp_path / "sweep.csv"
    series_dir = tmp_path / "series"
    result = runner.invoke(main, [
        "stddev-sweep", "--workload", "add", "--sizes", "50,100,200",
        "--vms", "2", "--warmup", "1", "--iterations", "3", "--repetitions", "10",
        "--out", str(out), "--series-dir", str(series_dir),
    ])
    assert result.exit_code == 0, result.output
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "kind,size,mean_ns,stddev_ns,relative_stddev"
    assert len(lines) == 4

    from perfdelta.stats import summarize

    for line in lines[1:]:
        kind, size, mean_ns, stddev_ns, relative = line.split(",")
        series = deserialize_series((series_dir / f"sweep_add_{size}.json").read_bytes())
        summary = summarize(series)
        assert float(mean_ns) == pytest.approx(summary.mean_ns, abs=1e-12)
        assert float(relative) == pytest.approx(summary.relative_stddev, abs=1e-12)


def test_stddev_sweep_allocate_budget(tmp_path):
    result = runner.invoke(main, [
        "stddev-sweep", "--workload", "allocate", "--sizes", "10000000",
        "--vms", "2", "--warmup", "1", "--iterations", "1", "--repetitions", "1000",
    ], env={"PERFDELTA_MEM_BUDGET_BYTES": "1000000"})
    assert result.exit_code == 2


# --- inject ----------------------------------------------------------------


def test_inject_writes_study_report(tmp_path):
    out = tmp_path / "study.json"
    result = runner.invoke(main, [
        "inject", "--workload", "add", "--size", "50", "--delta-ns", "5",
        "--trials", "2", "--vms", "2", "--warmup", "1", "--iterations", "2",
        "--repetitions", "5", "--no-parallel", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    doc = json.loads(out.read_text())
    assert doc["trials"] == 2
    assert len(doc["outcomes"]) == 2
    assert "detection_rate=" in result.output
