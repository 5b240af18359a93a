"""Campaign builder: simulate labelled sessions, featurize, split, persist.

A campaign is a grid of cells (domain x opponent profile x pool strategy); each
cell contributes ``sessions_per_cell`` sessions with seeds derived from the
master seed and the cell coordinates, so the whole dataset is a pure function
of its config.  Outputs live in a directory named by the config hash:

    config.json       the config that produced everything below
    profiles.json     domains, detector profiles, banded opponent profiles
    traces.jsonl      one labelled trace per line, canonical cell order
    features_cp*.jsonl  one feature record per trace per checkpoint round
    schema.json       frozen feature column order
    split.json        train/test assignment of trace ids
    provenance.json   config, pool-manifest, and schema hashes

Opponent profiles are found by rejection sampling against target opposition
bands.  Low-competitive pairings are excluded: campaign bands must start at
opposition 0.05 or higher, since near-compatible profiles end negotiations too
quickly to be worth recognizing.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domains import (
    Domain,
    OutcomeSpaceTooLargeError,
    PreferenceProfile,
    domain_from_json,
    domain_to_json,
    generate_domain,
    generate_profile,
    opposition,
    opposition_sampled,
    profile_from_json,
    profile_to_json,
)
from .features import (
    FeatureSeries,
    Scenario,
    feature_schema,
    feature_series_to_json,
    featurize_trace,
    read_feature_series,
    schema_hash,
)
from .protocol import ProtocolError, Trace, run_session, trace_to_json, validate_trace
from .strategies import (
    POOL_IDS,
    StrategyFactory,
    detector_factory,
    make_pool,
    pool_from_manifest,
    pool_manifest,
    pool_manifest_hash,
)

MIN_OPPOSITION = 0.05
PROFILE_SEARCH_CAP = 100_000
MAX_BAND = float(np.sqrt(2.0))


class CampaignError(RuntimeError):
    pass


class InfeasibleBandError(CampaignError):
    pass


@dataclass(frozen=True)
class DomainSpec:
    """Recipe for a synthetic domain of a fixed shape."""

    name: str
    n_issues: int
    values_per_issue: tuple[int, ...]
    seed: int

    def __post_init__(self):
        if self.n_issues != len(self.values_per_issue):
            raise ValueError("n_issues must match values_per_issue")

    def build(self) -> Domain:
        return generate_domain(self.n_issues, self.values_per_issue, self.seed, domain_id=self.name)


# Synthetic stand-ins sized like the four benchmark domains:
# bank 18 outcomes, car 240, university 11250, tram 972.
STANDARD_DOMAINS: dict[str, DomainSpec] = {
    "bank": DomainSpec("bank", 3, (3, 3, 2), 7),
    "car": DomainSpec("car", 4, (4, 4, 5, 3), 1),
    "university": DomainSpec("university", 5, (5, 5, 5, 6, 15), 11),
    "tram": DomainSpec("tram", 7, (2, 2, 3, 3, 3, 3, 3), 3),
}


@dataclass(frozen=True)
class OppositionBand:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi <= MAX_BAND:
            raise ValueError(f"band [{self.lo}, {self.hi}) outside [0, sqrt(2)]")

    def contains(self, value: float) -> bool:
        return self.lo <= value < self.hi

    def overlaps(self, other: "OppositionBand") -> bool:
        return self.lo < other.hi and other.lo < self.hi


@dataclass(frozen=True)
class CampaignConfig:
    scenario: Scenario
    domains: tuple[DomainSpec, ...]
    bands: tuple[OppositionBand, ...]
    pool: tuple[Mapping, ...]  # manifest entries: {"id": ..., "params": {...}}
    sessions_per_cell: int = 50
    deadline: int = 100
    checkpoints: tuple[int, ...] = (20, 40, 60, 80, 100)
    master_seed: int = 7
    detector_profile_seed: int = 101
    profile_search_seed: int = 202
    split_ratio: float = 0.8
    train_band_index: int = 0  # profile-tag split: band whose profiles train
    train_domain: str | None = None  # domain-tag split: defaults to first domain

    def __post_init__(self):
        if self.sessions_per_cell < 1:
            raise ValueError("sessions_per_cell must be >= 1")
        if self.deadline < 1:
            raise ValueError("deadline must be >= 1")
        if not self.checkpoints:
            raise ValueError("at least one checkpoint round is required")
        for checkpoint in self.checkpoints:
            if not 1 <= checkpoint <= self.deadline:
                raise ValueError(f"checkpoint {checkpoint} outside [1, deadline]")
        if not self.domains:
            raise ValueError("at least one domain is required")
        names = [spec.name for spec in self.domains]
        if len(set(names)) != len(names):
            raise ValueError("domain names must be unique")
        if not self.bands:
            raise ValueError("at least one opposition band is required")
        for k, band in enumerate(self.bands):
            if band.lo < MIN_OPPOSITION:
                raise ValueError(
                    f"band [{band.lo}, {band.hi}) reaches below the low-competition "
                    f"cutoff {MIN_OPPOSITION}"
                )
            for other in self.bands[k + 1:]:
                if band.overlaps(other):
                    raise ValueError(f"opposition bands overlap: {band} and {other}")
        if not self.pool:
            raise ValueError("pool manifest is empty")
        ids = [entry["id"] for entry in self.pool]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate strategy ids in pool manifest")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must be in (0, 1)")
        if not 0 <= self.train_band_index < len(self.bands):
            raise ValueError("train_band_index out of range")
        if self.train_domain is not None and self.train_domain not in names:
            raise ValueError(f"train_domain {self.train_domain!r} not among domains")


def config_to_json(config: CampaignConfig) -> dict:
    return {
        "scenario": config.scenario.value,
        "domains": [
            {
                "name": spec.name,
                "n_issues": spec.n_issues,
                "values_per_issue": list(spec.values_per_issue),
                "seed": spec.seed,
            }
            for spec in config.domains
        ],
        "bands": [[band.lo, band.hi] for band in config.bands],
        "pool": [{"id": entry["id"], "params": dict(entry["params"])} for entry in config.pool],
        "sessions_per_cell": config.sessions_per_cell,
        "deadline": config.deadline,
        "checkpoints": list(config.checkpoints),
        "master_seed": config.master_seed,
        "detector_profile_seed": config.detector_profile_seed,
        "profile_search_seed": config.profile_search_seed,
        "split_ratio": config.split_ratio,
        "train_band_index": config.train_band_index,
        "train_domain": config.train_domain,
    }


def config_from_json(doc: Mapping) -> CampaignConfig:
    return CampaignConfig(
        scenario=Scenario(doc["scenario"]),
        domains=tuple(
            DomainSpec(d["name"], d["n_issues"], tuple(d["values_per_issue"]), d["seed"])
            for d in doc["domains"]
        ),
        bands=tuple(OppositionBand(lo, hi) for lo, hi in doc["bands"]),
        pool=tuple({"id": e["id"], "params": dict(e["params"])} for e in doc["pool"]),
        sessions_per_cell=doc["sessions_per_cell"],
        deadline=doc["deadline"],
        checkpoints=tuple(doc["checkpoints"]),
        master_seed=doc["master_seed"],
        detector_profile_seed=doc["detector_profile_seed"],
        profile_search_seed=doc["profile_search_seed"],
        split_ratio=doc["split_ratio"],
        train_band_index=doc["train_band_index"],
        train_domain=doc.get("train_domain"),
    )


def config_hash(config: CampaignConfig) -> str:
    canonical = json.dumps(config_to_json(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def standard_pool() -> tuple[dict, ...]:
    return tuple(pool_manifest(make_pool(seed=7)))


def derived_seed(*parts: int) -> int:
    """Well-mixed 63-bit seed from a tuple of small integers."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))


def measure_opposition(
    domain: Domain, profile_a: PreferenceProfile, profile_b: PreferenceProfile, seed: int
) -> float:
    try:
        return opposition(domain, profile_a, profile_b)
    except OutcomeSpaceTooLargeError:
        return opposition_sampled(domain, profile_a, profile_b, seed)


def select_profiles_by_opposition(
    domain: Domain,
    detector_profile: PreferenceProfile,
    bands: Sequence[OppositionBand],
    seed: int,
    cap: int = PROFILE_SEARCH_CAP,
) -> list[tuple[PreferenceProfile, float]]:
    """One random profile per band, rejection-sampled on measured opposition."""
    found = []
    for band_index, band in enumerate(bands):
        for attempt in range(cap):
            candidate_seed = derived_seed(seed, band_index, attempt)
            profile = generate_profile(domain, candidate_seed)
            value = measure_opposition(domain, detector_profile, profile, candidate_seed)
            if band.contains(value):
                found.append((profile, value))
                break
        else:
            raise InfeasibleBandError(
                f"no profile with opposition in [{band.lo}, {band.hi}) found on domain "
                f"{domain.id!r} within {cap} attempts"
            )
    return found


# ---------------------------------------------------------------------------
# Cell execution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellPayload:
    """Everything one worker needs to simulate and featurize one cell."""

    domain: Domain
    profile_m: PreferenceProfile
    profile_o: PreferenceProfile
    opponent: StrategyFactory
    detector: StrategyFactory
    scenario: Scenario
    deadline: int
    checkpoints: tuple[int, ...]
    seeds: tuple[int, ...]


@dataclass
class CellResult:
    trace_ids: list[str]
    labels: list[str]
    trace_lines: list[str]
    feature_lines: dict[int, list[str]]


def run_cell(payload: CellPayload) -> CellResult:
    traces: list[Trace] = []
    for seed in payload.seeds:
        trace = run_session(
            payload.detector,
            payload.opponent,
            payload.domain,
            payload.profile_m,
            payload.profile_o,
            payload.deadline,
            seed,
        )
        try:
            validate_trace(trace, payload.domain, payload.deadline)
        except ProtocolError as err:
            raise CampaignError(f"session seed {seed} failed validation: {err}") from err
        traces.append(trace)
    profile_o_for_features = (
        payload.profile_o if payload.scenario.knows_opponent_utility else None
    )
    trace_lines = [json.dumps(trace_to_json(t), sort_keys=True) for t in traces]
    feature_lines: dict[int, list[str]] = {cp: [] for cp in payload.checkpoints}
    for trace in traces:
        for series in featurize_trace(
            trace,
            payload.scenario,
            payload.domain,
            payload.profile_m,
            profile_o_for_features,
            payload.checkpoints,
            payload.deadline,
        ):
            feature_lines[series.checkpoint].append(
                json.dumps(feature_series_to_json(series), sort_keys=True)
            )
    return CellResult(
        trace_ids=[t.trace_id for t in traces],
        labels=[t.opponent_label for t in traces],
        trace_lines=trace_lines,
        feature_lines=feature_lines,
    )


def resolve_workers(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("NEGREC_WORKERS")
    if env:
        return max(1, int(env))
    return 1


# ---------------------------------------------------------------------------
# Campaign build
# ---------------------------------------------------------------------------

def features_path(campaign_dir: Path, checkpoint: int) -> Path:
    return Path(campaign_dir) / f"features_cp{checkpoint:03d}.jsonl"


def build_dataset(
    config: CampaignConfig, out_root: str | Path, workers: int | None = None
) -> Path:
    """Build (or reuse) the campaign directory for ``config``; returns its path.

    An existing directory whose provenance matches the config hash is reused
    as-is, making repeated experiment runs cheap.
    """
    out_root = Path(out_root)
    digest = config_hash(config)
    campaign_dir = out_root / digest
    provenance_file = campaign_dir / "provenance.json"
    if provenance_file.exists():
        with open(provenance_file, "r", encoding="utf-8") as handle:
            if json.load(handle).get("config_hash") == digest:
                return campaign_dir
    campaign_dir.mkdir(parents=True, exist_ok=True)

    domains = [spec.build() for spec in config.domains]
    pool = pool_from_manifest(list(config.pool))
    detector = detector_factory()

    detector_profiles: dict[str, PreferenceProfile] = {}
    opponent_profiles: dict[str, list[tuple[PreferenceProfile, float]]] = {}
    for domain in domains:
        profile_m = generate_profile(domain, config.detector_profile_seed)
        detector_profiles[domain.id] = profile_m
        opponent_profiles[domain.id] = select_profiles_by_opposition(
            domain, profile_m, config.bands, config.profile_search_seed
        )

    payloads = []
    for d, domain in enumerate(domains):
        for b in range(len(config.bands)):
            profile_o = opponent_profiles[domain.id][b][0]
            for s, factory in enumerate(pool):
                seeds = tuple(
                    derived_seed(config.master_seed, d, b, s, k)
                    for k in range(config.sessions_per_cell)
                )
                payloads.append(
                    CellPayload(
                        domain=domain,
                        profile_m=detector_profiles[domain.id],
                        profile_o=profile_o,
                        opponent=factory,
                        detector=detector,
                        scenario=config.scenario,
                        deadline=config.deadline,
                        checkpoints=config.checkpoints,
                        seeds=seeds,
                    )
                )

    n_workers = resolve_workers(workers)
    records: list[tuple[str, str, str, str]] = []  # (trace_id, label, profile_o_id, domain_id)
    trace_file = open(campaign_dir / "traces.jsonl", "w", encoding="utf-8")
    feature_files = {
        cp: open(features_path(campaign_dir, cp), "w", encoding="utf-8")
        for cp in config.checkpoints
    }
    try:
        for payload, result in _run_cells(payloads, n_workers):
            for line in result.trace_lines:
                trace_file.write(line)
                trace_file.write("\n")
            for cp, lines in result.feature_lines.items():
                for line in lines:
                    feature_files[cp].write(line)
                    feature_files[cp].write("\n")
            for trace_id, label in zip(result.trace_ids, result.labels):
                records.append((trace_id, label, payload.profile_o.id, payload.domain.id))
    finally:
        trace_file.close()
        for handle in feature_files.values():
            handle.close()

    all_ids = [r[0] for r in records]
    if len(set(all_ids)) != len(all_ids):
        raise CampaignError("duplicate trace ids in campaign (seed collision)")

    split_doc = _build_split(config, records, domains, opponent_profiles)
    _dump_json(campaign_dir / "split.json", split_doc)
    _dump_json(campaign_dir / "config.json", config_to_json(config))
    _dump_json(
        campaign_dir / "profiles.json",
        {
            "domains": [domain_to_json(domain) for domain in domains],
            "detector_profiles": {
                domain_id: profile_to_json(profile)
                for domain_id, profile in detector_profiles.items()
            },
            "opponent_profiles": {
                domain_id: [
                    {
                        "band_index": k,
                        "band": [config.bands[k].lo, config.bands[k].hi],
                        "opposition": value,
                        "profile": profile_to_json(profile),
                    }
                    for k, (profile, value) in enumerate(banded)
                ]
                for domain_id, banded in opponent_profiles.items()
            },
        },
    )
    _dump_json(campaign_dir / "schema.json", feature_schema(config.scenario))
    _dump_json(
        campaign_dir / "provenance.json",
        {
            "config_hash": digest,
            "pool_manifest_hash": pool_manifest_hash(pool),
            "schema_hash": schema_hash(config.scenario),
            "n_traces": len(records),
        },
    )
    return campaign_dir


def _run_cells(payloads: list[CellPayload], n_workers: int):
    """Yield (payload, result) pairs in canonical cell order."""
    if n_workers <= 1:
        for payload in payloads:
            yield payload, run_cell(payload)
        return
    with ProcessPoolExecutor(max_workers=n_workers) as executor:
        # Waves keep memory bounded while preserving canonical output order.
        wave = 2 * n_workers
        for start in range(0, len(payloads), wave):
            chunk = payloads[start:start + wave]
            for payload, result in zip(chunk, executor.map(run_cell, chunk)):
                yield payload, result


def _dump_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split_stratified(
    labeled_ids: Sequence[tuple[str, str]], ratio: float, seed: int
) -> tuple[list[str], list[str]]:
    """Per-label random split; train share is round(ratio * n), clamped so
    both sides keep at least one record per label."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    by_label: dict[str, list[str]] = {}
    for trace_id, label in labeled_ids:
        by_label.setdefault(label, []).append(trace_id)
    train: list[str] = []
    test: list[str] = []
    for class_index, label in enumerate(sorted(by_label)):
        ids = sorted(by_label[label])
        if len(ids) < 2:
            raise ValueError(f"label {label!r} has fewer than 2 records; cannot split")
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), class_index)))
        order = rng.permutation(len(ids))
        n_train = int(round(ratio * len(ids)))
        n_train = min(max(n_train, 1), len(ids) - 1)
        train.extend(ids[i] for i in order[:n_train])
        test.extend(ids[i] for i in order[n_train:])
    return sorted(train), sorted(test)


def split_by_tag(
    tagged_ids: Sequence[tuple[str, str]], train_tags: Iterable[str]
) -> tuple[list[str], list[str]]:
    """Train side = records whose tag is in ``train_tags``; rest is test."""
    train_tags = set(train_tags)
    seen_tags = {tag for _, tag in tagged_ids}
    missing = train_tags - seen_tags
    if missing:
        raise ValueError(f"train tags not present in dataset: {sorted(missing)}")
    train = sorted(tid for tid, tag in tagged_ids if tag in train_tags)
    test = sorted(tid for tid, tag in tagged_ids if tag not in train_tags)
    if not train or not test:
        raise ValueError("tag split left one side empty")
    return train, test


def _build_split(
    config: CampaignConfig,
    records: list[tuple[str, str, str, str]],
    domains: list[Domain],
    opponent_profiles: dict[str, list[tuple[PreferenceProfile, float]]],
) -> dict:
    split_seed = derived_seed(config.master_seed, 0x5B17)
    if config.scenario in (Scenario.P1, Scenario.P2):
        train, test = split_stratified(
            [(r[0], r[1]) for r in records], config.split_ratio, split_seed
        )
        doc = {"mode": "stratified", "ratio": config.split_ratio, "seed": split_seed}
    elif config.scenario is Scenario.P3:
        train_tags = [
            opponent_profiles[domain.id][config.train_band_index][0].id for domain in domains
        ]
        train, test = split_by_tag([(r[0], r[2]) for r in records], train_tags)
        doc = {"mode": "by_profile", "train_tags": sorted(train_tags)}
    else:  # P4
        train_domain = config.train_domain or config.domains[0].name
        train, test = split_by_tag([(r[0], r[3]) for r in records], [train_domain])
        doc = {"mode": "by_domain", "train_tags": [train_domain]}
    overlap = set(train) & set(test)
    if overlap:
        raise CampaignError(f"split leaks {len(overlap)} trace ids")
    doc["train"] = train
    doc["test"] = test
    return doc


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------

@dataclass
class CampaignProfiles:
    domains: dict[str, Domain]
    detector_profiles: dict[str, PreferenceProfile]
    opponent_profiles: dict[str, PreferenceProfile]  # by profile id
    band_of_profile: dict[str, int]
    opposition_of_profile: dict[str, float]


def load_campaign_config(campaign_dir: str | Path) -> CampaignConfig:
    with open(Path(campaign_dir) / "config.json", "r", encoding="utf-8") as handle:
        return config_from_json(json.load(handle))


def load_profiles(campaign_dir: str | Path) -> CampaignProfiles:
    with open(Path(campaign_dir) / "profiles.json", "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    domains = {d["id"]: domain_from_json(d) for d in doc["domains"]}
    detector = {
        domain_id: profile_from_json(p) for domain_id, p in doc["detector_profiles"].items()
    }
    opponents: dict[str, PreferenceProfile] = {}
    band_of: dict[str, int] = {}
    opp_of: dict[str, float] = {}
    for banded in doc["opponent_profiles"].values():
        for entry in banded:
            profile = profile_from_json(entry["profile"])
            opponents[profile.id] = profile
            band_of[profile.id] = entry["band_index"]
            opp_of[profile.id] = entry["opposition"]
    return CampaignProfiles(domains, detector, opponents, band_of, opp_of)


def load_split(campaign_dir: str | Path) -> dict:
    with open(Path(campaign_dir) / "split.json", "r", encoding="utf-8") as handle:
        return json.load(handle)


def load_features(campaign_dir: str | Path, checkpoint: int) -> list[FeatureSeries]:
    return read_feature_series(features_path(Path(campaign_dir), checkpoint))


def label_vocabulary(labels: Iterable[str]) -> tuple[str, ...]:
    """Distinct labels in canonical pool order (unknown labels sort last)."""
    distinct = set(labels)
    known = [label for label in POOL_IDS if label in distinct]
    extra = sorted(distinct - set(POOL_IDS))
    return tuple(known + extra)


def arrays_from_series(
    series: Sequence[FeatureSeries], labels: Sequence[str]
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, list[str]]:
    """Stack feature records into (steps, mask, overall, y, trace_ids)."""
    if not series:
        raise ValueError("no feature records to stack")
    label_index = {label: k for k, label in enumerate(labels)}
    steps = np.stack([record.steps for record in series])
    mask = np.stack([record.mask for record in series])
    overall = np.stack([record.overall for record in series])
    y = np.array([label_index[record.label] for record in series], dtype=np.int64)
    return steps, mask, overall, y, [record.trace_id for record in series]


def dataset_fingerprint(campaign_dir: str | Path) -> dict:
    """Per-file and combined SHA-256 of every persisted campaign artifact."""
    campaign_dir = Path(campaign_dir)
    files = sorted(
        p for p in campaign_dir.iterdir() if p.suffix in (".json", ".jsonl") and p.is_file()
    )
    per_file = {}
    combined = hashlib.sha256()
    for path in files:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        per_file[path.name] = digest
        combined.update(path.name.encode("utf-8"))
        combined.update(digest.encode("utf-8"))
    return {"files": per_file, "combined": combined.hexdigest()}
