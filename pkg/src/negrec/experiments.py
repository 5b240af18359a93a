"""Scenario runners (P1-P4), evaluation, recognition, and report files.

Each scenario builds one or more campaigns, trains one model per checkpoint
round per training side, evaluates on the held-out side, and writes three
artifacts under the experiment directory:

    report.json   canonical machine-readable report (byte-reproducible)
    report.txt    the same tables rendered for humans
    timings.json  wall-clock phase timings (kept out of report.json so the
                  report stays byte-identical across equally seeded runs)

Reports include non-gating reference accuracy tables for the corresponding
published experiments; they are context for reading trends, not targets, since
this artifact uses synthetic stand-in strategies and domains.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import nn
from .dataset import (
    STANDARD_DOMAINS,
    CampaignConfig,
    DomainSpec,
    OppositionBand,
    arrays_from_series,
    build_dataset,
    config_hash,
    dataset_fingerprint,
    label_vocabulary,
    load_features,
    load_profiles,
    load_split,
    split_stratified,
    standard_pool,
    derived_seed,
)
from .domains import Domain, PreferenceProfile
from .features import FeatureSeries, Scenario, featurize_trace
from .protocol import Trace

DEFAULT_DOMAIN_ORDER = ("bank", "car", "university", "tram")
P1_BANDS = ((0.1, 0.2), (0.2, 0.3), (0.3, 0.45))
P2_BANDS = ((0.195, 0.205),)
P3_BANDS = ((0.05, 0.12), (0.12, 0.19), (0.19, 0.26), (0.26, 0.33), (0.33, 0.45))
P3_TRAIN_BAND_INDEX = 2
P4_BANDS = ((0.175, 0.185),)
EARLY_CHECKPOINTS = (20, 40, 60, 80, 100)
LATE_CHECKPOINTS = (60, 100)

# Non-gating reference accuracies (percent) for trend comparison only.
REFERENCE_ACCURACY = {
    "P2": {
        "bank": {20: 26.9, 40: 32.7, 60: 42.9, 80: 50.6, 100: 81.4},
        "car": {20: 35.4, 40: 42.6, 60: 61.3, 80: 69.8, 100: 93.1},
        "university": {20: 53.8, 40: 63.0, 60: 71.2, 80: 72.9, 100: 94.2},
        "tram": {20: 39.7, 40: 59.6, 60: 71.3, 80: 73.0, 100: 98.7},
        "average": {20: 39.0, 40: 49.5, 60: 61.7, 80: 66.6, 100: 91.9},
    },
    "P3": {
        "university": {100: (35.9, 64.8, 45.6, 57.5), 60: (23.3, 32.4, 36.1, 51.2)},
        "tram": {100: (53.7, 77.3, 88.9, 60.1), 60: (45.1, 59.8, 60.9, 51.3)},
        "bank": {100: (41.4, 56.1, 35.7, 34.1), 60: (21.0, 19.3, 18.8, 19.2)},
        "car": {100: (82.5, 65.5, 86.4, 88.1), 60: (56.5, 56.7, 50.3, 40.0)},
    },
    # test domain -> train domain -> percent
    "P4": {
        100: {
            "bank": {"car": 48.3, "university": 44.7, "tram": 42.5},
            "car": {"bank": 52.3, "university": 55.4, "tram": 46.3},
            "university": {"bank": 39.7, "car": 49.4, "tram": 58.0},
            "tram": {"bank": 45.7, "car": 49.7, "university": 72.1},
        },
        60: {
            "bank": {"car": 29.4, "university": 22.7, "tram": 29.2},
            "car": {"bank": 29.1, "university": 21.9, "tram": 52.0},
            "university": {"bank": 23.4, "car": 22.1, "tram": 23.4},
            "tram": {"bank": 38.4, "car": 57.6, "university": 25.0},
        },
    },
}


class ExperimentError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows = true class, cols = predicted
    n: int


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    matrix = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        matrix[t, p] += 1
    return matrix


def evaluate(params: nn.ModelParams, series: Sequence[FeatureSeries]) -> EvalResult:
    """Accuracy and confusion of one model on feature records of its shape."""
    if not series:
        raise ValueError("empty evaluation set")
    for record in series:
        if record.scenario is not params.scenario:
            raise nn.SchemaMismatchError(
                f"record scenario {record.scenario.value} != model {params.scenario.value}"
            )
        if record.checkpoint != params.checkpoint_round:
            raise nn.SchemaMismatchError(
                f"record checkpoint {record.checkpoint} != model {params.checkpoint_round}"
            )
    steps, mask, overall, y, _ = arrays_from_series(series, params.labels)
    y_pred = nn.predict(params, steps, mask, overall)
    matrix = confusion_matrix(y, y_pred, params.n_classes)
    return EvalResult(accuracy=float((y_pred == y).mean()), confusion=matrix, n=len(series))


def class_recall(result: EvalResult, class_index: int) -> float:
    row = result.confusion[class_index]
    total = row.sum()
    return float(row[class_index] / total) if total else 0.0


# ---------------------------------------------------------------------------
# Model sets and recognition
# ---------------------------------------------------------------------------

def model_path(models_dir: Path, checkpoint: int) -> Path:
    return Path(models_dir) / f"model_cp{checkpoint:03d}.json"


def history_path(models_dir: Path, checkpoint: int) -> Path:
    return Path(models_dir) / f"history_cp{checkpoint:03d}.csv"


def load_model_set(models_dir: str | Path) -> dict[int, nn.ModelParams]:
    models_dir = Path(models_dir)
    out: dict[int, nn.ModelParams] = {}
    for path in sorted(models_dir.glob("model_cp*.json")):
        params = nn.load_checkpoint(path)
        out[params.checkpoint_round] = params
    if not out:
        raise ExperimentError(f"no model checkpoints found in {models_dir}")
    return out


@dataclass
class Recognition:
    checkpoint: int
    used_fallback: bool
    posterior: list[tuple[str, float]]  # sorted, highest probability first

    @property
    def top(self) -> str:
        return self.posterior[0][0]


def recognize(
    model_set: Mapping[int, nn.ModelParams],
    trace: Trace,
    domain: Domain,
    profile_m: PreferenceProfile,
    profile_o: PreferenceProfile | None,
    deadline: int,
) -> Recognition:
    """Posterior over strategies for a (possibly ongoing) trace.

    Uses the model with the largest checkpoint round not exceeding the trace's
    current round; if the trace is shorter than every model, the smallest
    model runs on the padded trace and the result is flagged as a fallback.
    """
    if not model_set:
        raise ExperimentError("empty model set")
    rounds_seen = trace.end_round
    eligible = [cp for cp in model_set if cp <= rounds_seen]
    if eligible:
        checkpoint = max(eligible)
        used_fallback = False
    else:
        checkpoint = min(model_set)
        used_fallback = True
    params = model_set[checkpoint]
    [series] = featurize_trace(
        trace, params.scenario, domain, profile_m, profile_o, [checkpoint], deadline
    )
    probs = nn.model_forward(params, series.steps, series.mask, series.overall)
    order = np.argsort(-probs, kind="stable")
    posterior = [(params.labels[k], float(probs[k])) for k in order]
    return Recognition(checkpoint=checkpoint, used_fallback=used_fallback, posterior=posterior)


# ---------------------------------------------------------------------------
# Training helpers
# ---------------------------------------------------------------------------

def train_checkpoint_model(
    series: Sequence[FeatureSeries],
    scenario: Scenario,
    checkpoint: int,
    labels: Sequence[str],
    seed: int,
    epochs: int = 80,
    models_dir: str | Path | None = None,
) -> tuple[nn.ModelParams, list[tuple[int, float, float]]]:
    steps, mask, overall, y, _ = arrays_from_series(series, labels)
    params = nn.init_params(scenario, checkpoint, labels, seed=derived_seed(seed, checkpoint, 0))
    config = nn.TrainConfig(seed=derived_seed(seed, checkpoint, 1), epochs=epochs)
    history = nn.train(params, steps, mask, overall, y, config)
    if models_dir is not None:
        models_dir = Path(models_dir)
        models_dir.mkdir(parents=True, exist_ok=True)
        nn.save_checkpoint(params, model_path(models_dir, checkpoint))
        nn.save_history(history, history_path(models_dir, checkpoint))
    return params, history


def _filter_series(series: Sequence[FeatureSeries], ids: Sequence[str]) -> list[FeatureSeries]:
    wanted = set(ids)
    picked = [record for record in series if record.trace_id in wanted]
    if len(picked) != len(wanted):
        raise ExperimentError(f"missing {len(wanted) - len(picked)} feature records")
    return picked


# ---------------------------------------------------------------------------
# Scenario runners
# ---------------------------------------------------------------------------

@dataclass
class ScenarioSettings:
    """Overridable knobs shared by all scenario runners."""

    seed: int = 7
    sessions_per_cell: int = 50
    epochs: int = 80
    domains: tuple[str, ...] = DEFAULT_DOMAIN_ORDER
    checkpoints: tuple[int, ...] | None = None  # scenario default when None
    bands: tuple[tuple[float, float], ...] | None = None
    pool: tuple[Mapping, ...] | None = None
    deadline: int = 100
    workers: int | None = None

    def domain_specs(self) -> tuple[DomainSpec, ...]:
        missing = [name for name in self.domains if name not in STANDARD_DOMAINS]
        if missing:
            raise ExperimentError(f"unknown domains: {missing}")
        return tuple(STANDARD_DOMAINS[name] for name in self.domains)

    def pool_manifest(self) -> tuple[Mapping, ...]:
        return self.pool if self.pool is not None else standard_pool()


def run_scenario(
    scenario: Scenario, out_dir: str | Path, settings: ScenarioSettings | None = None
) -> dict:
    """Run one problem scenario end to end; returns the report document."""
    settings = settings or ScenarioSettings()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = {
        Scenario.P1: _run_p1,
        Scenario.P2: _run_p2,
        Scenario.P3: _run_p3,
        Scenario.P4: _run_p4,
    }[scenario]
    t_start = time.perf_counter()
    report, timings = runner(out_dir, settings)
    timings["total_s"] = time.perf_counter() - t_start
    write_report(report, out_dir)
    with open(out_dir / "timings.json", "w", encoding="utf-8") as handle:
        json.dump(timings, handle, indent=2, sort_keys=True)
        handle.write("\n")
    return report


def _single_domain_config(
    scenario: Scenario,
    spec: DomainSpec,
    bands: tuple[tuple[float, float], ...],
    checkpoints: tuple[int, ...],
    settings: ScenarioSettings,
    train_band_index: int = 0,
) -> CampaignConfig:
    return CampaignConfig(
        scenario=scenario,
        domains=(spec,),
        bands=tuple(OppositionBand(lo, hi) for lo, hi in bands),
        pool=settings.pool_manifest(),
        sessions_per_cell=settings.sessions_per_cell,
        deadline=settings.deadline,
        checkpoints=checkpoints,
        master_seed=settings.seed,
        train_band_index=train_band_index,
    )


def _per_domain_band_runner(
    scenario: Scenario, out_dir: Path, settings: ScenarioSettings, bands, checkpoints
):
    """Shared engine for P1/P2: per-domain campaigns, stratified splits,
    per-domain model sets, accuracy overall and per opposition band."""
    pool_labels = tuple(entry["id"] for entry in settings.pool_manifest())
    timings = {"build_s": 0.0, "train_s": 0.0, "eval_s": 0.0}
    accuracy: dict[str, dict[str, float]] = {}
    band_accuracy: dict[str, dict[str, dict[str, float]]] = {}
    confusion: dict[str, dict[str, list[list[int]]]] = {}
    campaign_meta: dict[str, dict] = {}
    for d_index, spec in enumerate(settings.domain_specs()):
        config = _single_domain_config(scenario, spec, bands, checkpoints, settings)
        t0 = time.perf_counter()
        campaign_dir = build_dataset(config, out_dir / "campaigns", settings.workers)
        timings["build_s"] += time.perf_counter() - t0
        split = load_split(campaign_dir)
        profiles = load_profiles(campaign_dir)
        campaign_meta[spec.name] = {
            "config_hash": config_hash(config),
            "dataset_hash": dataset_fingerprint(campaign_dir)["combined"],
            "oppositions": {
                str(profiles.band_of_profile[pid]): profiles.opposition_of_profile[pid]
                for pid in sorted(profiles.opponent_profiles)
            },
        }
        accuracy[spec.name] = {}
        band_accuracy[spec.name] = {}
        confusion[spec.name] = {}
        models_dir = out_dir / "models" / spec.name
        for checkpoint in checkpoints:
            series = load_features(campaign_dir, checkpoint)
            labels = label_vocabulary([s.label for s in series])
            train_series = _filter_series(series, split["train"])
            test_series = _filter_series(series, split["test"])
            t0 = time.perf_counter()
            params, _ = train_checkpoint_model(
                train_series,
                scenario,
                checkpoint,
                labels,
                seed=derived_seed(settings.seed, d_index),
                epochs=settings.epochs,
                models_dir=models_dir,
            )
            timings["train_s"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            result = evaluate(params, test_series)
            accuracy[spec.name][str(checkpoint)] = result.accuracy
            confusion[spec.name][str(checkpoint)] = result.confusion.tolist()
            by_band: dict[str, float] = {}
            for band_index in range(len(bands)):
                subset = [
                    record
                    for record in test_series
                    if profiles.band_of_profile[_profile_of(record.trace_id)] == band_index
                ]
                if subset:
                    by_band[str(band_index)] = evaluate(params, subset).accuracy
            band_accuracy[spec.name][str(checkpoint)] = by_band
            timings["eval_s"] += time.perf_counter() - t0
    accuracy["average"] = {
        str(cp): float(np.mean([accuracy[s.name][str(cp)] for s in settings.domain_specs()]))
        for cp in checkpoints
    }
    report = {
        "scenario": scenario.value,
        "labels": list(pool_labels),
        "baseline_accuracy": 1.0 / len(pool_labels),
        "checkpoints": list(checkpoints),
        "bands": [list(band) for band in bands],
        "domains": list(settings.domains),
        "campaigns": campaign_meta,
        "accuracy": accuracy,
        "band_accuracy": band_accuracy,
        "confusion": confusion,
        "settings": {
            "seed": settings.seed,
            "sessions_per_cell": settings.sessions_per_cell,
            "epochs": settings.epochs,
            "deadline": settings.deadline,
        },
    }
    return report, timings


def _profile_of(trace_id: str) -> str:
    return trace_id.split("/")[1]


def _run_p1(out_dir: Path, settings: ScenarioSettings):
    bands = settings.bands or P1_BANDS
    checkpoints = settings.checkpoints or EARLY_CHECKPOINTS
    return _per_domain_band_runner(Scenario.P1, out_dir, settings, bands, checkpoints)


def _run_p2(out_dir: Path, settings: ScenarioSettings):
    bands = settings.bands or P2_BANDS
    checkpoints = settings.checkpoints or EARLY_CHECKPOINTS
    report, timings = _per_domain_band_runner(
        Scenario.P2, out_dir, settings, bands, checkpoints
    )
    report["reference_accuracy_percent"] = {
        domain: {str(cp): value for cp, value in table.items()}
        for domain, table in REFERENCE_ACCURACY["P2"].items()
    }
    return report, timings


def _run_p3(out_dir: Path, settings: ScenarioSettings):
    bands = settings.bands or P3_BANDS
    checkpoints = settings.checkpoints or LATE_CHECKPOINTS
    if len(bands) < 2:
        raise ExperimentError("P3 needs a train band plus at least one test band")
    train_band_index = min(P3_TRAIN_BAND_INDEX, len(bands) - 1)
    pool_labels = tuple(entry["id"] for entry in settings.pool_manifest())
    timings = {"build_s": 0.0, "train_s": 0.0, "eval_s": 0.0}
    accuracy: dict[str, dict[str, dict[str, float]]] = {}
    confusion: dict[str, dict[str, list[list[int]]]] = {}
    campaign_meta: dict[str, dict] = {}
    train_oppositions: dict[str, float] = {}
    test_oppositions: dict[str, dict[str, float]] = {}
    for d_index, spec in enumerate(settings.domain_specs()):
        config = _single_domain_config(
            Scenario.P3, spec, bands, checkpoints, settings, train_band_index
        )
        t0 = time.perf_counter()
        campaign_dir = build_dataset(config, out_dir / "campaigns", settings.workers)
        timings["build_s"] += time.perf_counter() - t0
        split = load_split(campaign_dir)
        if set(split["train"]) & set(split["test"]):
            raise ExperimentError("profile-tag split leaked trace ids")
        profiles = load_profiles(campaign_dir)
        campaign_meta[spec.name] = {
            "config_hash": config_hash(config),
            "dataset_hash": dataset_fingerprint(campaign_dir)["combined"],
        }
        band_to_profile = {band: pid for pid, band in profiles.band_of_profile.items()}
        train_oppositions[spec.name] = profiles.opposition_of_profile[
            band_to_profile[train_band_index]
        ]
        test_oppositions[spec.name] = {
            str(band): profiles.opposition_of_profile[pid]
            for band, pid in sorted(band_to_profile.items())
            if band != train_band_index
        }
        accuracy[spec.name] = {}
        confusion[spec.name] = {}
        models_dir = out_dir / "models" / spec.name
        for checkpoint in checkpoints:
            series = load_features(campaign_dir, checkpoint)
            labels = label_vocabulary([s.label for s in series])
            train_series = _filter_series(series, split["train"])
            test_series = _filter_series(series, split["test"])
            t0 = time.perf_counter()
            params, _ = train_checkpoint_model(
                train_series,
                Scenario.P3,
                checkpoint,
                labels,
                seed=derived_seed(settings.seed, d_index),
                epochs=settings.epochs,
                models_dir=models_dir,
            )
            timings["train_s"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            per_band: dict[str, float] = {}
            for band_index in sorted(set(profiles.band_of_profile.values())):
                if band_index == train_band_index:
                    continue
                subset = [
                    record
                    for record in test_series
                    if profiles.band_of_profile[_profile_of(record.trace_id)] == band_index
                ]
                per_band[str(band_index)] = evaluate(params, subset).accuracy
            accuracy[spec.name][str(checkpoint)] = per_band
            confusion[spec.name][str(checkpoint)] = evaluate(params, test_series).confusion.tolist()
            timings["eval_s"] += time.perf_counter() - t0
    report = {
        "scenario": Scenario.P3.value,
        "labels": list(pool_labels),
        "baseline_accuracy": 1.0 / len(pool_labels),
        "checkpoints": list(checkpoints),
        "bands": [list(band) for band in bands],
        "train_band_index": train_band_index,
        "domains": list(settings.domains),
        "campaigns": campaign_meta,
        "train_oppositions": train_oppositions,
        "test_oppositions": test_oppositions,
        "accuracy": accuracy,
        "confusion": confusion,
        "reference_accuracy_percent": {
            domain: {str(cp): list(values) for cp, values in table.items()}
            for domain, table in REFERENCE_ACCURACY["P3"].items()
        },
        "settings": {
            "seed": settings.seed,
            "sessions_per_cell": settings.sessions_per_cell,
            "epochs": settings.epochs,
            "deadline": settings.deadline,
        },
    }
    return report, timings


def _run_p4(out_dir: Path, settings: ScenarioSettings):
    bands = settings.bands or P4_BANDS
    checkpoints = settings.checkpoints or LATE_CHECKPOINTS
    specs = settings.domain_specs()
    if len(specs) < 2:
        raise ExperimentError("P4 needs at least two domains")
    config = CampaignConfig(
        scenario=Scenario.P4,
        domains=specs,
        bands=tuple(OppositionBand(lo, hi) for lo, hi in bands),
        pool=settings.pool_manifest(),
        sessions_per_cell=settings.sessions_per_cell,
        deadline=settings.deadline,
        checkpoints=checkpoints,
        master_seed=settings.seed,
    )
    pool_labels = tuple(entry["id"] for entry in settings.pool_manifest())
    timings = {"build_s": 0.0, "train_s": 0.0, "eval_s": 0.0}
    t0 = time.perf_counter()
    campaign_dir = build_dataset(config, out_dir / "campaigns", settings.workers)
    timings["build_s"] += time.perf_counter() - t0
    profiles = load_profiles(campaign_dir)
    split = load_split(campaign_dir)
    if set(split["train"]) & set(split["test"]):
        raise ExperimentError("domain-tag split leaked trace ids")
    grid: dict[str, dict[str, dict[str, float | None]]] = {}
    confusion: dict[str, dict[str, list[list[int]]]] = {}
    for checkpoint in checkpoints:
        series = load_features(campaign_dir, checkpoint)
        labels = label_vocabulary([s.label for s in series])
        by_domain: dict[str, list[FeatureSeries]] = {name: [] for name in settings.domains}
        for record in series:
            by_domain[record.trace_id.split("/")[0]].append(record)
        grid[str(checkpoint)] = {}
        confusion[str(checkpoint)] = {}
        for t_index, train_spec in enumerate(specs):
            train_series = by_domain[train_spec.name]
            test_ids = {r.trace_id for name, recs in by_domain.items() if name != train_spec.name for r in recs}
            if {r.trace_id for r in train_series} & test_ids:
                raise ExperimentError("cross-domain split leaked trace ids")
            t0 = time.perf_counter()
            params, _ = train_checkpoint_model(
                train_series,
                Scenario.P4,
                checkpoint,
                labels,
                seed=derived_seed(settings.seed, t_index),
                epochs=settings.epochs,
                models_dir=out_dir / "models" / train_spec.name,
            )
            timings["train_s"] += time.perf_counter() - t0
            t0 = time.perf_counter()
            row: dict[str, float | None] = {}
            pooled_confusion = np.zeros((len(labels), len(labels)), dtype=np.int64)
            for test_spec in specs:
                if test_spec.name == train_spec.name:
                    row[test_spec.name] = None
                    continue
                result = evaluate(params, by_domain[test_spec.name])
                row[test_spec.name] = result.accuracy
                pooled_confusion += result.confusion
            grid[str(checkpoint)][train_spec.name] = row
            confusion[str(checkpoint)][train_spec.name] = pooled_confusion.tolist()
            timings["eval_s"] += time.perf_counter() - t0
    report = {
        "scenario": Scenario.P4.value,
        "labels": list(pool_labels),
        "baseline_accuracy": 1.0 / len(pool_labels),
        "checkpoints": list(checkpoints),
        "bands": [list(band) for band in bands],
        "domains": list(settings.domains),
        "campaign": {
            "config_hash": config_hash(config),
            "dataset_hash": dataset_fingerprint(campaign_dir)["combined"],
        },
        "oppositions": {
            domain_id: profiles.opposition_of_profile[pid]
            for pid, domain_id in (
                (pid, pid.rsplit("-prof-", 1)[0]) for pid in sorted(profiles.opponent_profiles)
            )
        },
        "grid": grid,
        "confusion": confusion,
        "reference_accuracy_percent": {
            str(cp): table for cp, table in REFERENCE_ACCURACY["P4"].items()
        },
        "settings": {
            "seed": settings.seed,
            "sessions_per_cell": settings.sessions_per_cell,
            "epochs": settings.epochs,
            "deadline": settings.deadline,
        },
    }
    return report, timings


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def write_report(report: dict, out_dir: str | Path) -> None:
    out_dir = Path(out_dir)
    with open(out_dir / "report.json", "w", encoding="utf-8") as handle:
        json.dump(report, handle, indent=2, sort_keys=True)
        handle.write("\n")
    with open(out_dir / "report.txt", "w", encoding="utf-8") as handle:
        handle.write(render_report(report))


def _table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for k, cell in enumerate(row):
            widths[k] = max(widths[k], len(cell))
    def fmt(cells):
        return "  ".join(cell.ljust(widths[k]) for k, cell in enumerate(cells)).rstrip()
    lines = [fmt(headers), fmt(["-" * w for w in widths])]
    lines.extend(fmt(row) for row in rows)
    return "\n".join(lines) + "\n"


def _pct(value: float | None) -> str:
    return "--" if value is None else f"{100.0 * value:.1f}"


def render_report(report: dict) -> str:
    scenario = report["scenario"]
    lines = [
        f"Scenario {scenario} report",
        f"baseline accuracy (random guess): {_pct(report['baseline_accuracy'])}%",
        "",
    ]
    checkpoints = [str(cp) for cp in report["checkpoints"]]
    if scenario in ("P1", "P2"):
        headers = ["domain"] + [f"cp{cp}" for cp in checkpoints]
        rows = []
        for domain in report["domains"] + ["average"]:
            rows.append([domain] + [_pct(report["accuracy"][domain][cp]) for cp in checkpoints])
        lines.append("Accuracy (%) by domain and checkpoint round:")
        lines.append(_table(headers, rows))
        lines.append("Accuracy (%) by opposition band (per domain, checkpoint rows):")
        for domain in report["domains"]:
            rows = []
            for cp in checkpoints:
                by_band = report["band_accuracy"][domain][cp]
                rows.append(
                    [f"cp{cp}"]
                    + [_pct(by_band.get(str(b))) for b in range(len(report["bands"]))]
                )
            band_headers = [domain] + [
                f"[{lo},{hi})" for lo, hi in report["bands"]
            ]
            lines.append(_table(band_headers, rows))
    elif scenario == "P3":
        for cp in checkpoints:
            headers = ["domain (train opp)"] + [
                f"band{b}" for b in range(len(report["bands"])) if b != report["train_band_index"]
            ]
            rows = []
            for domain in report["domains"]:
                label = f"{domain} ({report['train_oppositions'][domain]:.2f})"
                per_band = report["accuracy"][domain][cp]
                rows.append([label] + [_pct(per_band[k]) for k in sorted(per_band)])
            lines.append(f"Accuracy (%) at checkpoint {cp} by test opposition band:")
            lines.append(_table(headers, rows))
    elif scenario == "P4":
        for cp in checkpoints:
            headers = ["test \\ train"] + list(report["domains"])
            rows = []
            for test_domain in report["domains"]:
                row = [test_domain]
                for train_domain in report["domains"]:
                    value = report["grid"][cp][train_domain][test_domain]
                    row.append(_pct(value))
                rows.append(row)
            lines.append(f"Cross-domain accuracy (%) at checkpoint {cp}:")
            lines.append(_table(headers, rows))
    if "reference_accuracy_percent" in report:
        lines.append(
            "Reference values (non-gating, for trend comparison only) are in "
            "report.json under reference_accuracy_percent."
        )
    return "\n".join(lines) + "\n"
