"""Tests for the alternating-offers session engine and trace handling."""

from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negrec.domains import evaluate_utility, generate_domain, generate_profile
from negrec.protocol import (
    AGREEMENT,
    DEADLINE,
    Observation,
    ProtocolError,
    Round,
    Trace,
    WALK_AWAY,
    read_traces,
    run_session,
    trace_from_json,
    trace_to_json,
    truncate_trace,
    validate_trace,
    write_traces,
)
from negrec.strategies import best_bid, detector_factory, make_pool
from tests.conftest import seeds


POOL = {factory.id: factory for factory in make_pool(seed=7)}


def play(opponent_id, domain, profile_m, profile_o, deadline=20, seed=0):
    return run_session(
        detector_factory(),
        POOL[opponent_id],
        domain,
        profile_m,
        profile_o,
        deadline=deadline,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Session mechanics
# ---------------------------------------------------------------------------


def test_detector_opens_with_its_best_bid(bank_domain, bank_profiles):
    profile_m, profile_o = bank_profiles
    trace = play("hardliner", bank_domain, profile_m, profile_o, seed=1)
    assert trace.rounds[0].bid_m == best_bid(bank_domain, profile_m)


def test_hardliner_never_agrees_before_deadline(bank_domain, bank_profiles):
    profile_m, profile_o = bank_profiles
    trace = play("hardliner", bank_domain, profile_m, profile_o, deadline=15, seed=3)
    assert trace.ended_by == DEADLINE
    assert trace.end_round == 15
    assert trace.agreed_bid is None
    # a hardliner repeats its best own bid every round
    assert len({round_.bid_o for round_ in trace.rounds}) == 1


def test_conceder_reaches_agreement(bank_domain, bank_profiles):
    profile_m, profile_o = bank_profiles
    trace = play("conceder", bank_domain, profile_m, profile_o, deadline=50, seed=2)
    assert trace.ended_by == AGREEMENT
    assert trace.agreed_bid is not None


def test_opponent_accept_records_half_round(bank_domain, bank_profiles):
    """When the opponent accepts, the final round holds only the detector bid
    and the agreement is that bid."""
    profile_m, profile_o = bank_profiles
    trace = play("random_counter", bank_domain, profile_m, profile_o, deadline=50, seed=5)
    assert trace.ended_by == AGREEMENT
    last = trace.rounds[-1]
    if last.bid_o is None:
        assert trace.agreed_bid == last.bid_m
    else:
        assert trace.agreed_bid == last.bid_o


def test_deadline_must_be_positive(bank_domain, bank_profiles):
    profile_m, profile_o = bank_profiles
    with pytest.raises(ValueError):
        play("hardliner", bank_domain, profile_m, profile_o, deadline=0)


def test_sessions_are_deterministic(bank_domain, bank_profiles):
    profile_m, profile_o = bank_profiles
    a = play("boulware_jittered", bank_domain, profile_m, profile_o, deadline=40, seed=11)
    b = play("boulware_jittered", bank_domain, profile_m, profile_o, deadline=40, seed=11)
    assert a == b


def test_different_seeds_vary_random_play(bank_domain, bank_profiles):
    """Session seeds drive per-round jitter, so two seeds diverge."""
    profile_m, profile_o = bank_profiles
    a = play("boulware_jittered", bank_domain, profile_m, profile_o, deadline=40, seed=1)
    b = play("boulware_jittered", bank_domain, profile_m, profile_o, deadline=40, seed=2)
    assert a.rounds != b.rounds


@given(
    opponent_id=st.sampled_from(sorted(POOL)),
    seed=seeds,
    deadline=st.integers(min_value=1, max_value=30),
    profile_seed=st.integers(min_value=0, max_value=500),
)
@settings(max_examples=80, deadline=None)
def test_random_sessions_produce_valid_traces(opponent_id, seed, deadline, profile_seed):
    """Any pool opponent, any seed: the trace passes structural validation."""
    domain = generate_domain(n_issues=2, values_per_issue=[3, 3], seed=0)
    profile_m = generate_profile(domain, seed=1000 + profile_seed)
    profile_o = generate_profile(domain, seed=2000 + profile_seed)
    trace = play(opponent_id, domain, profile_m, profile_o, deadline=deadline, seed=seed)
    validate_trace(trace, domain, deadline)
    assert 1 <= trace.end_round <= deadline
    assert trace.opponent_label == opponent_id


def test_trace_id_layout(bank_domain, bank_profiles):
    profile_m, profile_o = bank_profiles
    trace = play("linear", bank_domain, profile_m, profile_o, seed=9)
    assert trace.trace_id == f"bank/{profile_o.id}/linear/s9"


# ---------------------------------------------------------------------------
# Observation helpers
# ---------------------------------------------------------------------------


def test_observation_helpers(bank_domain, bank_profiles):
    profile_m, _ = bank_profiles
    obs = Observation(
        round=5,
        my_bids=((0, 0, 0),),
        received_bids=((1, 1, 1), (2, 2, 1)),
        profile=profile_m,
        domain=bank_domain,
        deadline=20,
    )
    assert obs.progress == 0.25
    assert obs.remaining_rounds == 15
    assert obs.last_received == (2, 2, 1)
    empty = Observation(
        round=1, my_bids=(), received_bids=(), profile=profile_m,
        domain=bank_domain, deadline=20,
    )
    assert empty.last_received is None


# ---------------------------------------------------------------------------
# Truncation and validation
# ---------------------------------------------------------------------------


def test_truncate_marks_trace_ongoing(bank_domain, bank_profiles):
    profile_m, profile_o = bank_profiles
    trace = play("hardliner", bank_domain, profile_m, profile_o, deadline=12, seed=4)
    short = truncate_trace(trace, 5)
    assert short.end_round == 5
    assert short.ended_by is None
    assert short.agreed_bid is None
    assert short.rounds == trace.rounds[:5]
    # truncating past the end is the identity
    assert truncate_trace(trace, 50) == trace
    with pytest.raises(ValueError):
        truncate_trace(trace, 0)


def test_validate_trace_rejects_corruption(bank_domain, bank_profiles):
    from dataclasses import replace

    profile_m, profile_o = bank_profiles
    trace = play("conceder", bank_domain, profile_m, profile_o, deadline=50, seed=2)
    assert trace.ended_by == AGREEMENT

    wrong_agreed = replace(trace, agreed_bid=(0, 0, 0) if trace.agreed_bid != (0, 0, 0) else (1, 0, 0))
    with pytest.raises(ProtocolError):
        validate_trace(wrong_agreed, bank_domain, 50)

    missing_agreed = replace(trace, agreed_bid=None)
    with pytest.raises(ProtocolError):
        validate_trace(missing_agreed, bank_domain, 50)

    # a half round anywhere but the final agreement/walk-away round is invalid
    torn = replace(
        trace,
        rounds=(Round(bid_m=trace.rounds[0].bid_m, bid_o=None),) + trace.rounds[1:],
    )
    with pytest.raises(ProtocolError):
        validate_trace(torn, bank_domain, 50)


def test_validate_trace_deadline_consistency(bank_domain, bank_profiles):
    from dataclasses import replace

    profile_m, profile_o = bank_profiles
    trace = play("hardliner", bank_domain, profile_m, profile_o, deadline=10, seed=6)
    assert trace.ended_by == DEADLINE
    validate_trace(trace, bank_domain, 10)
    # deadline end without reaching the deadline round is inconsistent
    with pytest.raises(ProtocolError):
        validate_trace(replace(trace, rounds=trace.rounds[:-1]), bank_domain, 10)
    # more rounds than the deadline allows
    with pytest.raises(ProtocolError):
        validate_trace(trace, bank_domain, 9)


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------


def test_trace_json_round_trip(bank_domain, bank_profiles):
    profile_m, profile_o = bank_profiles
    for opponent_id, seed in [("conceder", 2), ("hardliner", 3), ("random_counter", 5)]:
        trace = play(opponent_id, bank_domain, profile_m, profile_o, deadline=30, seed=seed)
        assert trace_from_json(trace_to_json(trace)) == trace


def test_trace_jsonl_file_round_trip(tmp_path, bank_domain, bank_profiles):
    profile_m, profile_o = bank_profiles
    traces = [
        play("linear", bank_domain, profile_m, profile_o, deadline=25, seed=seed)
        for seed in range(4)
    ]
    path = tmp_path / "traces.jsonl"
    write_traces(traces, path)
    assert read_traces(path) == traces
    # one JSON object per line, written deterministically
    first = path.read_bytes()
    write_traces(traces, path)
    assert path.read_bytes() == first
    lines = first.decode().strip().split("\n")
    assert len(lines) == 4
    assert all(isinstance(json.loads(line), dict) for line in lines)
