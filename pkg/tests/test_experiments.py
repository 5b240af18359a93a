"""Tests for evaluation, recognition, and the scenario runners (small runs)."""

from __future__ import annotations

import json

import numpy as np
import pytest

from negrec import nn
from negrec.dataset import (
    arrays_from_series,
    label_vocabulary,
    load_features,
    load_profiles,
    load_split,
)
from negrec.features import Scenario
from negrec.experiments import (
    EvalResult,
    ExperimentError,
    Recognition,
    ScenarioSettings,
    class_recall,
    confusion_matrix,
    evaluate,
    history_path,
    load_model_set,
    model_path,
    recognize,
    render_report,
    run_scenario,
    train_checkpoint_model,
)
from negrec.protocol import read_traces, truncate_trace
from negrec.strategies import pool_manifest
from tests.conftest import tiny_pool


TINY_POOL_MANIFEST = tuple(pool_manifest(tiny_pool()))
TINY_LABELS = tuple(entry["id"] for entry in TINY_POOL_MANIFEST)


def tiny_settings(**kwargs) -> ScenarioSettings:
    defaults = dict(
        seed=7,
        sessions_per_cell=4,
        epochs=2,
        domains=("bank",),
        checkpoints=(5, 10),
        bands=((0.1, 0.3),),
        pool=TINY_POOL_MANIFEST,
        deadline=10,
    )
    defaults.update(kwargs)
    return ScenarioSettings(**defaults)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def test_confusion_matrix_layout():
    y_true = np.array([0, 0, 1, 2, 2, 2])
    y_pred = np.array([0, 1, 1, 2, 0, 2])
    matrix = confusion_matrix(y_true, y_pred, 3)
    assert matrix.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 2]]
    # row sums are per-class support
    assert matrix.sum(axis=1).tolist() == [2, 1, 3]
    assert matrix.sum() == 6


def test_class_recall():
    result = EvalResult(
        accuracy=0.5, confusion=np.array([[3, 1], [2, 2]]), n=8
    )
    assert class_recall(result, 0) == 0.75
    assert class_recall(result, 1) == 0.5
    empty = EvalResult(accuracy=0.0, confusion=np.zeros((2, 2), dtype=int), n=0)
    assert class_recall(empty, 0) == 0.0


def test_uniform_random_predictor_near_baseline():
    """Sanity anchor: guessing over 10 classes lands at 0.1 +- 0.04."""
    rng = np.random.default_rng(2024)
    y_true = rng.integers(0, 10, size=3000)
    y_pred = rng.integers(0, 10, size=3000)
    accuracy = float((y_true == y_pred).mean())
    assert abs(accuracy - 0.1) < 0.04
    matrix = confusion_matrix(y_true, y_pred, 10)
    assert matrix.sum() == 3000


# ---------------------------------------------------------------------------
# Evaluate + recognize against a trained tiny model
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained_tiny(tmp_path_factory):
    """Small P2 campaign with trained models at checkpoints 5 and 10."""
    from negrec.dataset import build_dataset
    from tests.conftest import tiny_campaign_config

    root = tmp_path_factory.mktemp("trained-tiny")
    config = tiny_campaign_config(Scenario.P2, sessions_per_cell=6)
    campaign_dir = build_dataset(config, root / "campaigns")
    split = load_split(campaign_dir)
    models_dir = root / "models"
    models = {}
    for checkpoint in config.checkpoints:
        series = load_features(campaign_dir, checkpoint)
        labels = label_vocabulary([s.label for s in series])
        train_series = [s for s in series if s.trace_id in set(split["train"])]
        params, history = train_checkpoint_model(
            train_series, Scenario.P2, checkpoint, labels,
            seed=3, epochs=3, models_dir=models_dir,
        )
        models[checkpoint] = (params, history)
    return config, campaign_dir, models_dir, models


def test_evaluate_accuracy_matches_confusion(trained_tiny):
    config, campaign_dir, _, models = trained_tiny
    split = load_split(campaign_dir)
    checkpoint = config.checkpoints[-1]
    params, _ = models[checkpoint]
    series = load_features(campaign_dir, checkpoint)
    test_series = [s for s in series if s.trace_id in set(split["test"])]
    result = evaluate(params, test_series)
    assert result.n == len(test_series)
    assert result.confusion.sum() == result.n
    trace = np.trace(result.confusion)
    assert result.accuracy == pytest.approx(trace / result.n)
    # recalls are consistent with the confusion rows
    for k in range(params.n_classes):
        support = result.confusion[k].sum()
        if support:
            assert class_recall(result, k) == pytest.approx(
                result.confusion[k, k] / support
            )


def test_evaluate_rejects_mismatched_records(trained_tiny):
    config, campaign_dir, _, models = trained_tiny
    cp5_series = load_features(campaign_dir, config.checkpoints[0])
    params10, _ = models[config.checkpoints[-1]]
    with pytest.raises(nn.SchemaMismatchError):
        evaluate(params10, cp5_series)
    wrong_scenario = nn.init_params(
        Scenario.P3, config.checkpoints[0], params10.labels, seed=0, hidden=4
    )
    with pytest.raises(nn.SchemaMismatchError):
        evaluate(wrong_scenario, cp5_series)
    with pytest.raises(ValueError):
        evaluate(params10, [])


def test_model_set_round_trip(trained_tiny):
    config, _, models_dir, models = trained_tiny
    model_set = load_model_set(models_dir)
    assert sorted(model_set) == sorted(config.checkpoints)
    for checkpoint, params in model_set.items():
        reference, _ = models[checkpoint]
        assert np.array_equal(params.w_d, reference.w_d)
        assert model_path(models_dir, checkpoint).exists()
        assert history_path(models_dir, checkpoint).exists()


def test_load_model_set_empty_dir(tmp_path):
    with pytest.raises(ExperimentError):
        load_model_set(tmp_path)


def test_recognize_selects_largest_checkpoint_not_past_trace(trained_tiny):
    config, campaign_dir, models_dir, _ = trained_tiny
    model_set = load_model_set(models_dir)
    profiles = load_profiles(campaign_dir)
    traces = read_traces(campaign_dir / "traces.jsonl")
    long_trace = next(t for t in traces if t.end_round == 10)
    domain = profiles.domains[long_trace.domain_id]
    profile_m = profiles.detector_profiles[long_trace.domain_id]

    full = recognize(model_set, long_trace, domain, profile_m, None, config.deadline)
    assert full.checkpoint == 10
    assert not full.used_fallback

    mid = recognize(
        model_set, truncate_trace(long_trace, 7), domain, profile_m, None, config.deadline
    )
    assert mid.checkpoint == 5
    assert not mid.used_fallback

    short = recognize(
        model_set, truncate_trace(long_trace, 2), domain, profile_m, None, config.deadline
    )
    assert short.checkpoint == 5
    assert short.used_fallback


def test_recognize_posterior_is_sorted_distribution(trained_tiny):
    config, campaign_dir, models_dir, _ = trained_tiny
    model_set = load_model_set(models_dir)
    profiles = load_profiles(campaign_dir)
    trace = read_traces(campaign_dir / "traces.jsonl")[0]
    domain = profiles.domains[trace.domain_id]
    profile_m = profiles.detector_profiles[trace.domain_id]
    result = recognize(model_set, trace, domain, profile_m, None, config.deadline)
    names = [name for name, _ in result.posterior]
    values = [value for _, value in result.posterior]
    assert sorted(names) == sorted(TINY_LABELS)
    assert values == sorted(values, reverse=True)
    assert sum(values) == pytest.approx(1.0)
    assert result.top == names[0]


def test_recognize_agrees_with_batch_evaluation(trained_tiny):
    """Trace-by-trace recognition reproduces the batch predictions."""
    config, campaign_dir, models_dir, models = trained_tiny
    model_set = load_model_set(models_dir)
    profiles = load_profiles(campaign_dir)
    split = load_split(campaign_dir)
    traces = {t.trace_id: t for t in read_traces(campaign_dir / "traces.jsonl")}

    by_checkpoint = {}
    for checkpoint in config.checkpoints:
        params, _ = models[checkpoint]
        series = load_features(campaign_dir, checkpoint)
        record_of = {s.trace_id: s for s in series}
        steps, mask, overall, _, ids = arrays_from_series(
            [record_of[tid] for tid in split["test"]], params.labels
        )
        predictions = nn.predict(params, steps, mask, overall)
        by_checkpoint[checkpoint] = dict(zip(ids, predictions))

    for trace_id in split["test"]:
        trace = traces[trace_id]
        domain = profiles.domains[trace.domain_id]
        profile_m = profiles.detector_profiles[trace.domain_id]
        result = recognize(model_set, trace, domain, profile_m, None, config.deadline)
        expected_cp = 10 if trace.end_round >= 10 else 5
        assert result.checkpoint == expected_cp
        params, _ = models[expected_cp]
        expected_label = params.labels[by_checkpoint[expected_cp][trace_id]]
        assert result.top == expected_label


def test_recognize_requires_models():
    with pytest.raises(ExperimentError):
        recognize({}, None, None, None, None, 10)


# ---------------------------------------------------------------------------
# Scenario runners (smoke scale)
# ---------------------------------------------------------------------------


def _common_report_checks(report, out_dir, scenario):
    assert report["scenario"] == scenario
    assert report["labels"] == list(TINY_LABELS)
    assert report["baseline_accuracy"] == pytest.approx(1.0 / len(TINY_LABELS))
    assert (out_dir / "report.json").exists()
    assert (out_dir / "report.txt").exists()
    assert (out_dir / "timings.json").exists()
    on_disk = json.loads((out_dir / "report.json").read_text())
    assert on_disk == json.loads(json.dumps(report))
    text = (out_dir / "report.txt").read_text()
    assert text == render_report(report)
    assert f"Scenario {scenario} report" in text
    assert "baseline accuracy" in text
    timings = json.loads((out_dir / "timings.json").read_text())
    assert set(timings) >= {"build_s", "train_s", "eval_s", "total_s"}


def test_run_scenario_p1_smoke(tmp_path):
    out_dir = tmp_path / "p1"
    report = run_scenario(Scenario.P1, out_dir, tiny_settings())
    _common_report_checks(report, out_dir, "P1")
    assert report["domains"] == ["bank"]
    for domain in ("bank", "average"):
        for checkpoint in ("5", "10"):
            assert 0.0 <= report["accuracy"][domain][checkpoint] <= 1.0
    confusion = np.array(report["confusion"]["bank"]["10"])
    n_test = confusion.sum()
    assert n_test > 0
    assert confusion.shape == (3, 3)
    assert "band_accuracy" in report


def test_run_scenario_p2_smoke(tmp_path):
    out_dir = tmp_path / "p2"
    report = run_scenario(
        Scenario.P2, out_dir, tiny_settings(bands=((0.195, 0.205),))
    )
    _common_report_checks(report, out_dir, "P2")
    assert "reference_accuracy_percent" in report
    # the text report only points at the json values, it does not repeat them
    assert "non-gating" in render_report(report)
    assert "reference_accuracy_percent" in (out_dir / "report.json").read_text()
    # the selected profile really sits inside the requested narrow band
    opposition = report["campaigns"]["bank"]["oppositions"]["0"]
    assert 0.195 <= opposition < 0.205


def test_run_scenario_p3_smoke(tmp_path):
    out_dir = tmp_path / "p3"
    report = run_scenario(
        Scenario.P3, out_dir, tiny_settings(bands=((0.1, 0.2), (0.2, 0.3))),
    )
    _common_report_checks(report, out_dir, "P3")
    assert report["train_band_index"] == 1
    assert set(report["test_oppositions"]["bank"]) == {"0"}
    for checkpoint in ("5", "10"):
        per_band = report["accuracy"]["bank"][checkpoint]
        assert set(per_band) == {"0"}
        assert 0.0 <= per_band["0"] <= 1.0
    assert 0.2 <= report["train_oppositions"]["bank"] < 0.3


def test_run_scenario_p4_smoke(tmp_path):
    out_dir = tmp_path / "p4"
    report = run_scenario(
        Scenario.P4,
        out_dir,
        tiny_settings(domains=("bank", "car"), sessions_per_cell=3),
    )
    _common_report_checks(report, out_dir, "P4")
    for checkpoint in ("5", "10"):
        grid = report["grid"][checkpoint]
        for train_domain in ("bank", "car"):
            for test_domain in ("bank", "car"):
                value = grid[train_domain][test_domain]
                if train_domain == test_domain:
                    assert value is None  # diagonal is never evaluated
                else:
                    assert 0.0 <= value <= 1.0
    assert set(report["oppositions"]) == {"bank", "car"}
    text = (out_dir / "report.txt").read_text()
    assert "test \\ train" in text
    assert "--" in text  # rendered diagonal dashes


def test_scenario_runs_are_byte_reproducible(tmp_path):
    settings = tiny_settings(domains=("bank", "car"), sessions_per_cell=3)
    report_a = run_scenario(Scenario.P4, tmp_path / "a", settings)
    report_b = run_scenario(Scenario.P4, tmp_path / "b", settings)
    assert report_a == report_b
    bytes_a = (tmp_path / "a" / "report.json").read_bytes()
    bytes_b = (tmp_path / "b" / "report.json").read_bytes()
    assert bytes_a == bytes_b
    assert (tmp_path / "a" / "report.txt").read_bytes() == (
        tmp_path / "b" / "report.txt"
    ).read_bytes()


def test_p4_requires_two_domains(tmp_path):
    with pytest.raises(ExperimentError):
        run_scenario(Scenario.P4, tmp_path, tiny_settings(domains=("bank",)))


def test_p3_requires_two_bands(tmp_path):
    with pytest.raises(ExperimentError):
        run_scenario(Scenario.P3, tmp_path, tiny_settings(bands=((0.1, 0.3),)))


def test_settings_reject_unknown_domain():
    with pytest.raises(ExperimentError):
        tiny_settings(domains=("atlantis",)).domain_specs()
