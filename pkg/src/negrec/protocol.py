"""Alternating-offers protocol: one session, strictly alternating, round deadline.

The detector agent (M) always moves first.  Round i normally records the pair
(bid_m, bid_o); the final round holds only bid_m when the opponent accepts or
walks away right after M's offer.  If M accepts, the accepted offer is the
final round's bid_o, so agreement traces always contain the accepted bid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .domains import Bid, Domain, PreferenceProfile

if TYPE_CHECKING:
    from .strategies import StrategyFactory

AGREEMENT = "agreement"
DEADLINE = "deadline"
WALK_AWAY = "walk_away"


class ProtocolError(RuntimeError):
    """A strategy emitted an action the protocol cannot apply."""


@dataclass(frozen=True)
class Offer:
    bid: Bid


@dataclass(frozen=True)
class Accept:
    pass


@dataclass(frozen=True)
class WalkAway:
    pass


Action = Offer | Accept | WalkAway


@dataclass(frozen=True)
class Round:
    bid_m: Bid
    bid_o: Bid | None


@dataclass(frozen=True)
class Trace:
    """Recorded session: labelled time series of per-round bid pairs."""

    domain_id: str
    profile_m_id: str
    profile_o_id: str
    rounds: tuple[Round, ...]
    ended_by: str | None  # AGREEMENT / DEADLINE / WALK_AWAY, or None while ongoing
    agreed_bid: Bid | None
    opponent_label: str
    seed: int

    @property
    def end_round(self) -> int:
        return len(self.rounds)

    @property
    def trace_id(self) -> str:
        return f"{self.domain_id}/{self.profile_o_id}/{self.opponent_label}/s{self.seed}"


@dataclass(frozen=True)
class Observation:
    """What a strategy may see when deciding: histories, own profile, clock."""

    round: int  # 1-based, the round currently being played
    my_bids: tuple[Bid, ...]
    received_bids: tuple[Bid, ...]
    profile: PreferenceProfile
    domain: Domain
    deadline: int

    @property
    def progress(self) -> float:
        """Normalized time: current round over deadline."""
        return self.round / self.deadline

    @property
    def remaining_rounds(self) -> int:
        return self.deadline - self.round

    @property
    def last_received(self) -> Bid | None:
        return self.received_bids[-1] if self.received_bids else None


def agent_stream(seed: int, role: int) -> np.random.Generator:
    """Per-agent random stream for one session; role 0 = detector, 1 = opponent."""
    return np.random.default_rng(np.random.SeedSequence((seed, role)))


def run_session(
    detector: "StrategyFactory",
    opponent: "StrategyFactory",
    domain: Domain,
    profile_m: PreferenceProfile,
    profile_o: PreferenceProfile,
    deadline: int,
    seed: int,
) -> Trace:
    """Play one session to agreement, walk-away, or the round deadline."""
    if deadline < 1:
        raise ValueError("deadline must be >= 1")
    profile_m.check_domain(domain)
    profile_o.check_domain(domain)

    agent_m = detector.build()
    agent_o = opponent.build()
    rng_m = agent_stream(seed, 0)
    rng_o = agent_stream(seed, 1)

    bids_m: list[Bid] = []
    bids_o: list[Bid] = []
    rounds: list[Round] = []
    ended_by: str | None = None
    agreed_bid: Bid | None = None

    for round_no in range(1, deadline + 1):
        obs_m = Observation(
            round=round_no,
            my_bids=tuple(bids_m),
            received_bids=tuple(bids_o),
            profile=profile_m,
            domain=domain,
            deadline=deadline,
        )
        action_m = agent_m.decide(obs_m, rng_m)
        if isinstance(action_m, Accept):
            if not bids_o:
                raise ProtocolError("detector accepted before any offer was made")
            ended_by = AGREEMENT
            agreed_bid = bids_o[-1]
            break
        if isinstance(action_m, WalkAway):
            if not rounds:
                raise ProtocolError("detector walked away before any offer was made")
            ended_by = WALK_AWAY
            break
        domain.validate_bid(action_m.bid)
        bids_m.append(action_m.bid)

        obs_o = Observation(
            round=round_no,
            my_bids=tuple(bids_o),
            received_bids=tuple(bids_m),
            profile=profile_o,
            domain=domain,
            deadline=deadline,
        )
        action_o = agent_o.decide(obs_o, rng_o)
        if isinstance(action_o, Accept):
            ended_by = AGREEMENT
            agreed_bid = bids_m[-1]
            rounds.append(Round(bid_m=action_m.bid, bid_o=None))
            break
        if isinstance(action_o, WalkAway):
            ended_by = WALK_AWAY
            rounds.append(Round(bid_m=action_m.bid, bid_o=None))
            break
        domain.validate_bid(action_o.bid)
        bids_o.append(action_o.bid)
        rounds.append(Round(bid_m=action_m.bid, bid_o=action_o.bid))
    else:
        ended_by = DEADLINE

    return Trace(
        domain_id=domain.id,
        profile_m_id=profile_m.id,
        profile_o_id=profile_o.id,
        rounds=tuple(rounds),
        ended_by=ended_by,
        agreed_bid=agreed_bid,
        opponent_label=opponent.id,
        seed=seed,
    )


def truncate_trace(trace: Trace, n_rounds: int) -> Trace:
    """First ``n_rounds`` rounds; marked ongoing if the original went further."""
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if n_rounds >= trace.end_round:
        return trace
    return replace(
        trace,
        rounds=trace.rounds[:n_rounds],
        ended_by=None,
        agreed_bid=None,
    )


def validate_trace(trace: Trace, domain: Domain, deadline: int) -> None:
    """Replay-style structural checks; raises ProtocolError on any violation."""
    if not 1 <= trace.end_round <= deadline:
        raise ProtocolError(
            f"trace {trace.trace_id} has end_round {trace.end_round}, deadline {deadline}"
        )
    for k, rnd in enumerate(trace.rounds):
        domain.validate_bid(rnd.bid_m)
        if rnd.bid_o is None:
            if k != len(trace.rounds) - 1:
                raise ProtocolError(f"non-final round {k + 1} is missing the opponent bid")
            if trace.ended_by not in (AGREEMENT, WALK_AWAY):
                raise ProtocolError("half round recorded without agreement or walk-away")
        else:
            domain.validate_bid(rnd.bid_o)
    last = trace.rounds[-1]
    if trace.ended_by == AGREEMENT:
        if trace.agreed_bid is None:
            raise ProtocolError("agreement trace has no agreed bid")
        accepted = last.bid_m if last.bid_o is None else last.bid_o
        if trace.agreed_bid != accepted:
            raise ProtocolError("agreed bid does not match the final offer on the table")
    elif trace.ended_by == DEADLINE:
        if trace.end_round != deadline or last.bid_o is None:
            raise ProtocolError("deadline trace must contain full rounds up to the deadline")
        if trace.agreed_bid is not None:
            raise ProtocolError("deadline trace cannot carry an agreed bid")
    elif trace.ended_by is None and trace.agreed_bid is not None:
        raise ProtocolError("ongoing trace cannot carry an agreed bid")


# ---------------------------------------------------------------------------
# JSONL serialization: one trace per line, bids as arrays of value indices.
# ---------------------------------------------------------------------------

def trace_to_json(trace: Trace) -> dict:
    return {
        "domain_id": trace.domain_id,
        "profile_m_id": trace.profile_m_id,
        "profile_o_id": trace.profile_o_id,
        "opponent_label": trace.opponent_label,
        "seed": trace.seed,
        "end_round": trace.end_round,
        "ended_by": trace.ended_by,
        "agreed_bid": list(trace.agreed_bid) if trace.agreed_bid is not None else None,
        "rounds": [
            [list(rnd.bid_m), list(rnd.bid_o) if rnd.bid_o is not None else None]
            for rnd in trace.rounds
        ],
    }


def trace_from_json(doc: dict) -> Trace:
    rounds = tuple(
        Round(
            bid_m=tuple(item[0]),
            bid_o=tuple(item[1]) if item[1] is not None else None,
        )
        for item in doc["rounds"]
    )
    return Trace(
        domain_id=doc["domain_id"],
        profile_m_id=doc["profile_m_id"],
        profile_o_id=doc["profile_o_id"],
        rounds=rounds,
        ended_by=doc["ended_by"],
        agreed_bid=tuple(doc["agreed_bid"]) if doc["agreed_bid"] is not None else None,
        opponent_label=doc["opponent_label"],
        seed=doc["seed"],
    )


def write_traces(traces, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for trace in traces:
            handle.write(json.dumps(trace_to_json(trace), sort_keys=True))
            handle.write("\n")


def read_traces(path) -> list[Trace]:
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                out.append(trace_from_json(json.loads(line)))
    return out
