import math

import numpy as np
import pandas as pd
import pytest

from hawkes_em.events import EventSequence
from hawkes_em.harness import (
    ExperimentConfig,
    ResultRow,
    emit_plot_data,
    metric_names,
    resolve_estimator,
    run_sweep,
    rows_to_frame,
    sample_truths,
    split_train_test,
    summarize,
)
from hawkes_em.job_manager import get_run_status
from hawkes_em.storage import read_results_csv, save_events
from hawkes_em.utils import ConfigError, EmptySplit


@pytest.fixture
def tiny_config():
    """One sweep value on one graph and one simulation, with short fits."""
    return ExperimentConfig(
        seed=4, D=3, edge_prob=0.5, mu_range=(0.2, 0.5), estimators=["vi-exp", "mle-adm4"],
        sweep_values=[60], graphs=1, sims=1, metrics="f1,prec@3,relerr,fprfnr",
        vi={"T_E": 3, "T_EM": 2}, mle={"max_iter": 20}, workers=2,
    )


def ten_events():
    return EventSequence.from_events(np.arange(1.0, 11.0), [0, 1] * 5, horizon=11.0, D=2)


def test_split_train_test():
    """Test a 7/3 split at the midpoint between the sides"""
    train, test = split_train_test(ten_events(), 0.7)
    assert (train.n_events, test.n_events) == (7, 3)
    assert train.horizon == test.start == pytest.approx(7.5)
    assert test.horizon == 11.0
    joined = train.concat(test)
    np.testing.assert_array_equal(joined.times, ten_events().times)


def test_split_rejects_empty_side():
    """Test that a split with no test events is refused"""
    seq = EventSequence.from_events([1.0, 2.0, 3.0], [0, 0, 0], horizon=4.0, D=1)
    with pytest.raises(EmptySplit):
        split_train_test(seq, 0.9)
    with pytest.raises(ConfigError):
        split_train_test(seq, 1.0)


def test_metric_names(tiny_config):
    """Test the emitted metric names"""
    assert metric_names(tiny_config) == ["f1", "precision_at_k", "relative_error", "fpr", "fnr"]
    tiny_config.split_fraction = 0.7
    assert metric_names(tiny_config)[-1] == "pred_loglik"


def test_degenerate_sweep_counts_rows(tiny_config):
    """Test that one value on one graph gives estimators x metrics rows"""
    rows = run_sweep(tiny_config, progress=False)
    assert len(rows) == 2 * 5
    assert [row.estimator for row in rows] == ["mle-adm4"] * 5 + ["vi-exp"] * 5
    assert all(row.sweep_value == 60 for row in rows)


def test_sweep_is_deterministic(tiny_config):
    """Test that reruns give identical rows apart from timings"""
    tiny_config.sims = 2
    first = rows_to_frame(run_sweep(tiny_config, progress=False)).drop(columns=["wall_time", "time_per_iteration"])
    tiny_config.workers = 1
    second = rows_to_frame(run_sweep(tiny_config, progress=False)).drop(columns=["wall_time", "time_per_iteration"])
    pd.testing.assert_frame_equal(first, second)


def test_sweep_writes_outputs(tiny_config, tmp_path):
    """Test the results, summary, plot and status files"""
    rows = run_sweep(tiny_config, tmp_path, progress=False)
    results = read_results_csv(tmp_path / "results.csv")
    assert len(results) == len(rows)
    assert list(results.columns) == ["estimator", "sweep_value", "graph", "sim", "metric", "value",
                                     "wall_time", "status", "time_per_iteration"]
    assert (tmp_path / "summary.csv").exists()
    assert get_run_status(tmp_path)["status"] == "completed"
    plot = read_results_csv(tmp_path / "plot_f1.csv")
    assert list(plot.columns) == ["sweep_value", "estimator", "mean", "std", "n"]


def test_failed_split_becomes_error_rows(tiny_config):
    """Test that task failures surface as error rows, not exceptions"""
    tiny_config.split_fraction = 0.999
    rows = run_sweep(tiny_config, progress=False)
    assert len(rows) == 2 * 6
    assert all(row.status == "error:EMPTY_SPLIT" for row in rows)
    assert all(math.isnan(row.value) for row in rows)


def test_dataset_mode(tmp_path, small_seq):
    """Test held-out scoring of a real event file"""
    path = tmp_path / "events.csv"
    save_events(small_seq, path)
    cfg = ExperimentConfig(dataset=str(path), split_fraction=0.5, estimators=["mle-adm4"],
                           sweep_values=[1], mle={"max_iter": 10}, workers=1)
    rows = run_sweep(cfg, progress=False)
    assert len(rows) == 1
    assert rows[0].metric == "pred_loglik"
    assert rows[0].status == "ok"
    assert math.isfinite(rows[0].value)


def test_plot_data_single_row(tmp_path):
    """Test that a single row gives one line with std 0"""
    rows = [ResultRow("vi-exp", 300, 0, 0, "f1", 0.8, 1.0)]
    paths = emit_plot_data(rows, tmp_path)
    assert [p.name for p in paths] == ["plot_f1.csv", "plot_wall_time.csv"]
    plot = read_results_csv(paths[0])
    assert len(plot) == 1
    assert plot.loc[0, "mean"] == pytest.approx(0.8)
    assert plot.loc[0, "std"] == 0.0
    assert plot.loc[0, "n"] == 1


def test_summarize_skips_failed_rows():
    """Test aggregation over successful rows only"""
    rows = [
        ResultRow("vi-exp", 300, 0, 0, "f1", 0.6, 1.0),
        ResultRow("vi-exp", 300, 1, 0, "f1", 0.8, 1.0),
        ResultRow("vi-exp", 300, 2, 0, "f1", float("nan"), 0.0, "error:NON_FINITE_LIKELIHOOD"),
    ]
    summary = summarize(rows)
    assert summary.loc[0, "mean"] == pytest.approx(0.7)
    assert summary.loc[0, "std"] == pytest.approx(0.1)
    assert summary.loc[0, "n"] == 2


def test_config_from_yaml(tmp_path):
    """Test loading and validating a YAML experiment"""
    path = tmp_path / "sweep.yaml"
    path.write_text("D: 5\nestimators: [vi-sg-like, mle-sglp]\nsweep_axis: M\nsweep_values: [3, 5]\n"
                    "vi:\n  T_E: 10\n", encoding="utf-8")
    cfg = ExperimentConfig.from_yaml(path)
    assert cfg.D == 5
    assert cfg.sweep_axis == "M"
    assert cfg.vi == {"T_E": 10}
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("data", [
    {"D": 0},
    {"estimators": ["svm"]},
    {"sweep_axis": "horizon"},
    {"dataset": "events.csv", "split_fraction": 0.5, "sweep_axis": "D"},
    {"vi": {"learning_rate": 0.1}},
    {"dataset": "events.csv"},
    {"metrics": "auc"},
])
def test_config_errors(data):
    """Test that invalid experiments are rejected"""
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


def test_estimator_aliases():
    """Test the -like suffix on estimator names"""
    assert resolve_estimator("MLE-ADM4-like").name == "mle-adm4"
    assert resolve_estimator("vi-sg").family == "vi"
    assert resolve_estimator("svm") is None


def test_metric_names_with_repeated_metrics(tiny_config):
    """Test one name per threshold when a metric is listed twice"""
    tiny_config.metrics = "f1:eta=0.04,f1:eta=0.1,prec@3,prec@5"
    assert metric_names(tiny_config) == ["f1", "f1@eta=0.1", "precision_at_3", "precision_at_5"]
    rows = run_sweep(tiny_config, progress=False)
    assert {row.metric for row in rows} == set(metric_names(tiny_config))
    assert all(row.status == "ok" for row in rows)


def test_dimension_sweep_records_iteration_times(tiny_config, tmp_path):
    """Test a sweep over D with one graph per dimension and per-iteration timings"""
    tiny_config.sweep_axis = "D"
    tiny_config.sweep_values = [2, 4]
    tiny_config.n_events = 60
    tiny_config.metrics = "f1,prec@4"
    rows = run_sweep(tiny_config, tmp_path, progress=False)
    assert len(rows) == 2 * 2 * 2
    assert all(row.status == "ok" for row in rows)
    assert all(row.time_per_iteration > 0 for row in rows)
    assert all(row.time_per_iteration <= row.wall_time for row in rows)
    timing = read_results_csv(tmp_path / "plot_time_per_iteration.csv")
    assert sorted(set(timing["sweep_value"])) == [2, 4]
    assert set(timing["n"]) == {1}
    assert (tmp_path / "plot_wall_time.csv").exists()


def test_sample_truths_per_dimension(tiny_config):
    """Test that a D sweep draws graphs of each size and other axes share them"""
    tiny_config.sweep_values = [60, 90]
    shared = sample_truths(tiny_config)
    assert shared[0, 0] is shared[1, 0]
    tiny_config.sweep_axis = "D"
    tiny_config.sweep_values = [2, 5]
    truths = sample_truths(tiny_config)
    assert (truths[0, 0].D, truths[1, 0].D) == (2, 5)


def test_unexpected_fit_errors_become_error_rows(tiny_config, monkeypatch):
    """Test that a numerical failure in one estimator does not abort the sweep"""
    def fail(*args, **kwargs):
        raise np.linalg.LinAlgError("singular matrix")

    monkeypatch.setattr("hawkes_em.harness.fit_mle", fail)
    tiny_config.sims = 2
    rows = run_sweep(tiny_config, progress=False)
    assert len(rows) == 2 * 2 * 5
    mle_rows = [row for row in rows if row.estimator == "mle-adm4"]
    vi_rows = [row for row in rows if row.estimator == "vi-exp"]
    assert all(row.status == "error:LinAlgError" for row in mle_rows)
    assert all(math.isnan(row.value) for row in mle_rows)
    assert all(row.status == "ok" for row in vi_rows)


def test_unexpected_data_errors_become_error_rows(tiny_config, monkeypatch):
    """Test that a failure while simulating fails only that task"""
    def fail(*args, **kwargs):
        raise FloatingPointError("overflow in exp")

    monkeypatch.setattr("hawkes_em.harness.simulate", fail)
    rows = run_sweep(tiny_config, progress=False)
    assert len(rows) == 2 * 5
    assert all(row.status == "error:FloatingPointError" for row in rows)
