"""Trace featurization: per-round utility features, move categories, overall stats.

Each round of a trace becomes one time step holding the basic utilities of the
two bids on the table under the true and frequency-estimated utility functions,
their round-over-round changes, and a one-hot category of the opponent's move.
A trace-level vector adds last-round utilities, first-to-last changes, move
category sums, and the normalized end round.

Knowledge scenarios: under FULL_KNOWLEDGE the opponent's true utility function
is available (8 basic utilities); the reduced scenarios drop the two columns
that need it (6 basic utilities) and measure opponent-side moves with the
frequency estimate instead.

An accepted offer counts as the accepting side's final bid: accepting is
offering the same contract back, so a final round where the opponent accepted
still yields a full feature row.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .domains import Domain, PreferenceProfile, evaluate_utility
from .frequency_model import SmithFrequencyModel
from .protocol import AGREEMENT, Trace

DANS_GAMMA = 0.002


class Scenario(str, Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"

    @property
    def knows_opponent_utility(self) -> bool:
        return self is Scenario.P1


class MoveKind(Enum):
    FORTUNATE = 0
    SELFISH = 1
    CONCESSION = 2
    UNFORTUNATE = 3
    NICE = 4
    SILENT = 5


def dans_classify(delta_o: float, delta_m: float, gamma: float = DANS_GAMMA) -> MoveKind:
    """Categorize an opponent move from the two utility deltas it caused.

    delta_o is the change in the opponent's (possibly estimated) utility of
    its own bids; delta_m the change in our utility of those bids.  Each delta
    falls in one of three bands (above gamma, within +-gamma, below -gamma),
    and every band combination maps to exactly one category.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    sign_o = 1 if delta_o > gamma else (-1 if delta_o < -gamma else 0)
    sign_m = 1 if delta_m > gamma else (-1 if delta_m < -gamma else 0)
    return _DANS_TABLE[(sign_o, sign_m)]


_DANS_TABLE = {
    (1, 1): MoveKind.FORTUNATE,
    (1, -1): MoveKind.SELFISH,
    (1, 0): MoveKind.SELFISH,
    (-1, 1): MoveKind.CONCESSION,
    (-1, 0): MoveKind.CONCESSION,
    (-1, -1): MoveKind.UNFORTUNATE,
    (0, -1): MoveKind.UNFORTUNATE,
    (0, 1): MoveKind.NICE,
    (0, 0): MoveKind.SILENT,
}

# Basic utility columns in fixed order: owner of the utility function
# (own/opp, true/estimated) crossed with the bid it is applied to.
FULL_BASIC_COLUMNS = (
    "own_util_own_bid",
    "own_util_opp_bid",
    "opp_util_own_bid",
    "opp_util_opp_bid",
    "est_own_util_own_bid",
    "est_own_util_opp_bid",
    "est_opp_util_own_bid",
    "est_opp_util_opp_bid",
)
REDUCED_BASIC_COLUMNS = tuple(
    name for name in FULL_BASIC_COLUMNS if name not in ("opp_util_own_bid", "opp_util_opp_bid")
)
MOVE_COLUMNS = tuple(f"move_{kind.name.lower()}" for kind in MoveKind)


def basic_columns(scenario: Scenario) -> tuple[str, ...]:
    return FULL_BASIC_COLUMNS if scenario.knows_opponent_utility else REDUCED_BASIC_COLUMNS


def step_columns(scenario: Scenario) -> tuple[str, ...]:
    basics = basic_columns(scenario)
    return basics + tuple(f"delta_{name}" for name in basics) + MOVE_COLUMNS


def overall_columns(scenario: Scenario) -> tuple[str, ...]:
    basics = basic_columns(scenario)
    return (
        tuple(f"last_{name}" for name in basics)
        + tuple(f"change_{name}" for name in basics)
        + tuple(f"moves_{kind.name.lower()}" for kind in MoveKind)
        + ("end_round_fraction",)
    )


def n_step_features(scenario: Scenario) -> int:
    return len(step_columns(scenario))


def n_overall_features(scenario: Scenario) -> int:
    return len(overall_columns(scenario))


def feature_schema(scenario: Scenario) -> dict:
    return {
        "scenario": scenario.value,
        "step_columns": list(step_columns(scenario)),
        "overall_columns": list(overall_columns(scenario)),
        "move_gamma": DANS_GAMMA,
    }


def schema_hash(scenario: Scenario) -> str:
    canonical = json.dumps(feature_schema(scenario), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class FeatureSeries:
    """Fixed-shape feature block for one trace at one recognition round."""

    trace_id: str
    label: str
    scenario: Scenario
    checkpoint: int
    steps: np.ndarray  # (checkpoint, n_step_features)
    mask: np.ndarray  # (checkpoint,) 1.0 on valid prefix rows
    overall: np.ndarray  # (n_overall_features,)

    @property
    def n_valid(self) -> int:
        return int(self.mask.sum())


def _opponent_bid_rows(trace: Trace):
    """The opponent's effective bid per round: its offer, or on a final
    agreement round the bid it accepted; None only for walk-away half rounds."""
    rows = []
    for k, rnd in enumerate(trace.rounds):
        bid_o = rnd.bid_o
        is_new = bid_o is not None
        if bid_o is None and k == len(trace.rounds) - 1 and trace.ended_by == AGREEMENT:
            bid_o = trace.agreed_bid
            is_new = True
        rows.append((rnd.bid_m, bid_o, is_new))
    return rows


def _basic_grid(
    trace: Trace,
    domain: Domain,
    profile_m: PreferenceProfile,
    profile_o: PreferenceProfile | None,
) -> np.ndarray:
    """Per-round values of the 8 basic utility columns (true-opponent columns
    are 0 when profile_o is None).  Frequency models grow round by round, so
    row r uses counts from rounds 1..r."""
    rows = _opponent_bid_rows(trace)
    grid = np.zeros((len(rows), 8))
    sfm_m = SmithFrequencyModel(domain)
    sfm_o = SmithFrequencyModel(domain)
    last_bid_o = None
    for r, (bid_m, bid_o, is_new) in enumerate(rows):
        sfm_m.update(bid_m)
        if bid_o is not None and is_new:
            sfm_o.update(bid_o)
        if bid_o is None:
            bid_o = last_bid_o
        grid[r, 0] = evaluate_utility(profile_m, bid_m)
        grid[r, 4] = sfm_m.estimate_utility(bid_m)
        grid[r, 6] = sfm_o.estimate_utility(bid_m)
        if profile_o is not None:
            grid[r, 2] = evaluate_utility(profile_o, bid_m)
        if bid_o is not None:
            grid[r, 1] = evaluate_utility(profile_m, bid_o)
            grid[r, 5] = sfm_m.estimate_utility(bid_o)
            grid[r, 7] = sfm_o.estimate_utility(bid_o)
            if profile_o is not None:
                grid[r, 3] = evaluate_utility(profile_o, bid_o)
            last_bid_o = bid_o
    return grid


_FULL_INDEX = {name: k for k, name in enumerate(FULL_BASIC_COLUMNS)}


def _step_matrix(
    trace: Trace,
    scenario: Scenario,
    domain: Domain,
    profile_m: PreferenceProfile,
    profile_o: PreferenceProfile | None,
    gamma: float,
) -> np.ndarray:
    """Unpadded step rows for every available round of the trace."""
    if trace.end_round < 1:
        raise ValueError("trace is empty")
    if scenario.knows_opponent_utility and profile_o is None:
        raise ValueError("full-knowledge featurization needs the opponent profile")
    grid = _basic_grid(trace, domain, profile_m, profile_o)
    basics = grid[:, [_FULL_INDEX[name] for name in basic_columns(scenario)]]
    deltas = np.zeros_like(basics)
    deltas[1:] = basics[1:] - basics[:-1]

    rows = _opponent_bid_rows(trace)
    move_col = "opp_util_opp_bid" if scenario.knows_opponent_utility else "est_opp_util_opp_bid"
    series_o = grid[:, _FULL_INDEX[move_col]]
    series_m = grid[:, _FULL_INDEX["own_util_opp_bid"]]
    onehot = np.zeros((len(rows), len(MoveKind)))
    for r in range(1, len(rows)):
        if rows[r][2]:  # a real opponent move happened this round
            kind = dans_classify(series_o[r] - series_o[r - 1], series_m[r] - series_m[r - 1], gamma)
            onehot[r, kind.value] = 1.0
    return np.concatenate([basics, deltas, onehot], axis=1)


def timestep_features(
    trace: Trace,
    scenario: Scenario,
    domain: Domain,
    profile_m: PreferenceProfile,
    profile_o: PreferenceProfile | None,
    checkpoint_round: int,
    gamma: float = DANS_GAMMA,
) -> tuple[np.ndarray, np.ndarray]:
    """Step matrix padded/truncated to ``checkpoint_round`` rows, with mask."""
    if checkpoint_round < 1:
        raise ValueError("checkpoint_round must be >= 1")
    full = _step_matrix(trace, scenario, domain, profile_m, profile_o, gamma)
    n_valid = min(trace.end_round, checkpoint_round)
    steps = np.zeros((checkpoint_round, full.shape[1]))
    steps[:n_valid] = full[:n_valid]
    mask = np.zeros(checkpoint_round)
    mask[:n_valid] = 1.0
    return steps, mask


def overall_features(
    trace: Trace,
    scenario: Scenario,
    domain: Domain,
    profile_m: PreferenceProfile,
    profile_o: PreferenceProfile | None,
    checkpoint_round: int,
    deadline: int,
    gamma: float = DANS_GAMMA,
) -> np.ndarray:
    """Trace-level feature vector for the prefix up to ``checkpoint_round``."""
    steps, mask = timestep_features(
        trace, scenario, domain, profile_m, profile_o, checkpoint_round, gamma
    )
    return _overall_from_steps(steps, mask, trace, checkpoint_round, deadline, scenario)


def _overall_from_steps(
    steps: np.ndarray,
    mask: np.ndarray,
    trace: Trace,
    checkpoint_round: int,
    deadline: int,
    scenario: Scenario,
) -> np.ndarray:
    n_basic = len(basic_columns(scenario))
    n_valid = int(mask.sum())
    last = steps[n_valid - 1, :n_basic]
    first = steps[0, :n_basic]
    move_sums = steps[:n_valid, 2 * n_basic:].sum(axis=0)
    end_fraction = min(trace.end_round, checkpoint_round) / deadline
    return np.concatenate([last, last - first, move_sums, [end_fraction]])


def featurize_trace(
    trace: Trace,
    scenario: Scenario,
    domain: Domain,
    profile_m: PreferenceProfile,
    profile_o: PreferenceProfile | None,
    checkpoints: Sequence[int],
    deadline: int,
    gamma: float = DANS_GAMMA,
) -> list[FeatureSeries]:
    """One FeatureSeries per checkpoint; the step grid is computed once."""
    full = _step_matrix(trace, scenario, domain, profile_m, profile_o, gamma)
    out = []
    for checkpoint in checkpoints:
        n_valid = min(trace.end_round, checkpoint)
        steps = np.zeros((checkpoint, full.shape[1]))
        steps[:n_valid] = full[:n_valid]
        mask = np.zeros(checkpoint)
        mask[:n_valid] = 1.0
        overall = _overall_from_steps(steps, mask, trace, checkpoint, deadline, scenario)
        out.append(
            FeatureSeries(
                trace_id=trace.trace_id,
                label=trace.opponent_label,
                scenario=scenario,
                checkpoint=checkpoint,
                steps=steps,
                mask=mask,
                overall=overall,
            )
        )
    return out


# ---------------------------------------------------------------------------
# JSONL persistence: one record per trace per checkpoint round.
# ---------------------------------------------------------------------------

def feature_series_to_json(series: FeatureSeries) -> dict:
    return {
        "trace_id": series.trace_id,
        "label": series.label,
        "scenario": series.scenario.value,
        "checkpoint": series.checkpoint,
        "steps": [float(x) for x in series.steps.ravel()],
        "mask": [int(x) for x in series.mask],
        "overall": [float(x) for x in series.overall],
    }


def feature_series_from_json(doc: dict) -> FeatureSeries:
    scenario = Scenario(doc["scenario"])
    checkpoint = int(doc["checkpoint"])
    width = n_step_features(scenario)
    steps = np.asarray(doc["steps"], dtype=float).reshape(checkpoint, width)
    return FeatureSeries(
        trace_id=doc["trace_id"],
        label=doc["label"],
        scenario=scenario,
        checkpoint=checkpoint,
        steps=steps,
        mask=np.asarray(doc["mask"], dtype=float),
        overall=np.asarray(doc["overall"], dtype=float),
    )


def write_feature_series(records: Iterable[FeatureSeries], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(feature_series_to_json(record), sort_keys=True))
            handle.write("\n")


def read_feature_series(path) -> list[FeatureSeries]:
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                out.append(feature_series_from_json(json.loads(line)))
    return out


def write_schema(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(feature_schema(scenario), handle, indent=2, sort_keys=True)
        handle.write("\n")
