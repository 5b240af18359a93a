"""Detector strategy (nice tit-for-tat) and the labelled opponent pool.

All pool strategies share one acceptance rule: accept the incoming offer iff
its utility is at least the utility of the bid the strategy is about to offer
(AC-next).  What differs is how each strategy plans that next bid: random
exploration, time-dependent concession curves of different exponents, jittered
or stepped variants, reciprocating rules, and a policy switcher.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .domains import (
    Bid,
    best_bid,
    evaluate_utility,
    outcome_index_matrix,
    utilities_of_all_bids,
)
from .frequency_model import SmithFrequencyModel
from .protocol import Accept, Action, Observation, Offer

POOL_IDS = (
    "random_counter",
    "boulware",
    "conceder",
    "hardliner",
    "linear",
    "tit_for_tat_relative",
    "behavior_mirror",
    "boulware_jittered",
    "stepped_concession",
    "meta_switcher",
)


def time_dependent_target(t: float, u_min: float, u_max: float, e: float) -> float:
    """Target utility of the classic time-dependent tactic family.

    Concedes from u_max at t=0 to u_min at t=1; e < 1 concedes late (boulware),
    e > 1 concedes early (conceder), e = 1 linearly.
    """
    if e <= 0:
        raise ValueError("concession exponent e must be > 0")
    if not 0.0 <= u_min <= u_max <= 1.0:
        raise ValueError("need 0 <= u_min <= u_max <= 1")
    if not 0.0 <= t <= 1.0:
        raise ValueError("normalized time t must be in [0, 1]")
    return u_min + (u_max - u_min) * (1.0 - t ** (1.0 / e))


class Strategy:
    """One negotiating agent for one session.

    Subclasses implement :meth:`propose`; acceptance is the shared AC-next
    rule in :meth:`decide`.  Instances hold per-session state and must not be
    reused across sessions; build fresh ones through a :class:`StrategyFactory`.
    """

    def __init__(self, strategy_id: str, params: dict[str, Any]) -> None:
        self.id = strategy_id
        self.params = params
        self._matrix: np.ndarray | None = None
        self._utils: np.ndarray | None = None

    def _ensure_cache(self, obs: Observation) -> None:
        if self._utils is None:
            self._matrix = outcome_index_matrix(obs.domain)
            self._utils = utilities_of_all_bids(obs.domain, obs.profile)

    def _bid_at(self, index: int) -> Bid:
        assert self._matrix is not None
        return tuple(int(v) for v in self._matrix[index])

    def propose(self, obs: Observation, rng: np.random.Generator) -> Bid:
        raise NotImplementedError

    def decide(self, obs: Observation, rng: np.random.Generator) -> Action:
        planned = self.propose(obs, rng)
        incoming = obs.last_received
        if incoming is not None:
            if evaluate_utility(obs.profile, incoming) >= evaluate_utility(obs.profile, planned):
                return Accept()
        return Offer(planned)

    # -- bid selection helpers -------------------------------------------

    def _pick_above_target(
        self, target: float, window: float, rng: np.random.Generator
    ) -> Bid:
        """Random bid with utility in [target, target + window]; else the
        tightest bid above target; else the best bid."""
        utils = self._utils
        assert utils is not None
        band = np.nonzero((utils >= target) & (utils <= target + window))[0]
        if band.size:
            return self._bid_at(int(band[rng.integers(band.size)]))
        above = np.nonzero(utils >= target)[0]
        if above.size:
            return self._bid_at(int(above[np.argmin(utils[above])]))
        return self._bid_at(int(np.argmax(utils)))


@dataclass(frozen=True)
class StrategyFactory:
    """Shareable, picklable recipe for per-session strategy instances."""

    id: str
    cls: type[Strategy]
    params: Mapping[str, Any] = field(default_factory=dict)

    def build(self) -> Strategy:
        return self.cls(self.id, dict(self.params))


# ---------------------------------------------------------------------------
# Opponent pool members
# ---------------------------------------------------------------------------

class RandomCounterStrategy(Strategy):
    """Counters with a uniformly random bid from the whole outcome space."""

    def propose(self, obs: Observation, rng: np.random.Generator) -> Bid:
        self._ensure_cache(obs)
        assert self._matrix is not None
        return self._bid_at(int(rng.integers(self._matrix.shape[0])))


class TimeDependentStrategy(Strategy):
    """Concession curve u_min + (u_max - u_min) * (1 - t^(1/e))."""

    def target(self, obs: Observation, rng: np.random.Generator) -> float:
        return time_dependent_target(
            obs.progress,
            self.params["u_min"],
            self.params["u_max"],
            self.params["e"],
        )

    def propose(self, obs: Observation, rng: np.random.Generator) -> Bid:
        self._ensure_cache(obs)
        return self._pick_above_target(
            self.target(obs, rng), self.params.get("window", 0.05), rng
        )


class JitteredTimeDependentStrategy(TimeDependentStrategy):
    """Time-dependent curve with per-round uniform noise on the target."""

    def target(self, obs: Observation, rng: np.random.Generator) -> float:
        base = super().target(obs, rng)
        amp = self.params["jitter"]
        noisy = base + rng.uniform(-amp, amp)
        return float(np.clip(noisy, self.params["u_min"], self.params["u_max"]))


class HardlinerStrategy(Strategy):
    """Repeats its own best bid forever; concedes nothing."""

    def propose(self, obs: Observation, rng: np.random.Generator) -> Bid:
        return best_bid(obs.domain, obs.profile)


class TitForTatRelativeStrategy(Strategy):
    """Reciprocates the opponent's total concession, scaled by kappa.

    Concession is measured in this agent's own utility of the received bids
    (latest versus first).  A small time drift breaks mutual-waiting
    deadlocks against non-conceding opponents.
    """

    def propose(self, obs: Observation, rng: np.random.Generator) -> Bid:
        self._ensure_cache(obs)
        concession = 0.0
        if len(obs.received_bids) >= 2:
            first = evaluate_utility(obs.profile, obs.received_bids[0])
            latest = evaluate_utility(obs.profile, obs.received_bids[-1])
            concession = max(0.0, latest - first)
        target = 1.0 - self.params["kappa"] * concession - self.params["drift"] * obs.progress
        target = float(np.clip(target, self.params["floor"], 1.0))
        return self._pick_nearest_target(target, rng)

    def _pick_nearest_target(self, target: float, rng: np.random.Generator) -> Bid:
        utils = self._utils
        assert utils is not None
        window = self.params.get("window", 0.025)
        band = np.nonzero(np.abs(utils - target) <= window)[0]
        if band.size:
            return self._bid_at(int(band[rng.integers(band.size)]))
        return self._bid_at(int(np.argmin(np.abs(utils - target))))


class BehaviorMirrorStrategy(Strategy):
    """Mirrors the opponent's last move, measured in this agent's utility.

    Keeps a running target; each round the target moves opposite to the
    change the opponent's bids showed (they move toward us, we move toward
    them), scaled by a gain and clamped to [floor, 1].
    """

    def __init__(self, strategy_id: str, params: dict[str, Any]) -> None:
        super().__init__(strategy_id, params)
        self._target = 1.0
        self._consumed = 0

    def propose(self, obs: Observation, rng: np.random.Generator) -> Bid:
        self._ensure_cache(obs)
        received = obs.received_bids
        if len(received) >= 2 and len(received) > self._consumed:
            prev = evaluate_utility(obs.profile, received[-2])
            latest = evaluate_utility(obs.profile, received[-1])
            delta = latest - prev
            self._target = float(
                np.clip(self._target - self.params["gain"] * delta, self.params["floor"], 1.0)
            )
        self._consumed = len(received)
        return self._pick_above_target(self._target, self.params.get("window", 0.05), rng)


class SteppedConcessionStrategy(Strategy):
    """Piecewise-constant staircase: drops the target by a fixed step every
    ``period`` rounds until it reaches the floor."""

    def propose(self, obs: Observation, rng: np.random.Generator) -> Bid:
        self._ensure_cache(obs)
        steps_taken = (obs.round - 1) // int(self.params["period"])
        target = max(self.params["floor"], 1.0 - self.params["step"] * steps_taken)
        return self._pick_above_target(target, self.params.get("window", 0.05), rng)


class MetaSwitcherStrategy(Strategy):
    """Alternates between a tough and a soft time-dependent sub-policy every
    ``period`` rounds, both evaluated at global negotiation time."""

    def propose(self, obs: Observation, rng: np.random.Generator) -> Bid:
        self._ensure_cache(obs)
        block = (obs.round - 1) // int(self.params["period"])
        e = self.params["e_tough"] if block % 2 == 0 else self.params["e_soft"]
        target = time_dependent_target(
            obs.progress, self.params["u_min"], self.params["u_max"], e
        )
        return self._pick_above_target(target, self.params.get("window", 0.05), rng)


# ---------------------------------------------------------------------------
# Detector
# ---------------------------------------------------------------------------

class NiceTitForTatStrategy(Strategy):
    """Detector: reciprocates concessions and favors mutually good bids.

    Opens with its utility-1 bid.  Afterwards its own-utility target is
    1 - kappa * (opponent's total concession in detector utility, clamped at
    0).  Among bids within ``window`` of the target it offers the one the
    frequency model rates best for the opponent; accepts iff the incoming
    offer is at least as good as that planned offer.
    """

    def __init__(self, strategy_id: str, params: dict[str, Any]) -> None:
        super().__init__(strategy_id, params)
        self._sfm: SmithFrequencyModel | None = None
        self._consumed = 0

    def propose(self, obs: Observation, rng: np.random.Generator) -> Bid:
        self._ensure_cache(obs)
        if self._sfm is None:
            self._sfm = SmithFrequencyModel(obs.domain)
        for bid in obs.received_bids[self._consumed:]:
            self._sfm.update(bid)
        self._consumed = len(obs.received_bids)

        if not obs.received_bids:
            return best_bid(obs.domain, obs.profile)

        first = evaluate_utility(obs.profile, obs.received_bids[0])
        latest = evaluate_utility(obs.profile, obs.received_bids[-1])
        concession = max(0.0, latest - first)
        target = 1.0 - self.params["kappa"] * concession

        utils = self._utils
        assert utils is not None and self._matrix is not None
        band = np.nonzero(np.abs(utils - target) <= self.params["window"])[0]
        if band.size == 0:
            return self._bid_at(int(np.argmin(np.abs(utils - target))))
        estimates = self._sfm.estimate_many(self._matrix[band])
        return self._bid_at(int(band[np.argmax(estimates)]))


def detector_factory() -> StrategyFactory:
    return StrategyFactory(
        id="nice_tit_for_tat",
        cls=NiceTitForTatStrategy,
        params={"kappa": 1.0, "window": 0.025},
    )


# ---------------------------------------------------------------------------
# Pool construction
# ---------------------------------------------------------------------------

def make_pool(seed: int) -> list[StrategyFactory]:
    """Ten labelled opponent factories; parameters deterministic in seed."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x9001)))
    curve = {"u_min": 0.3, "u_max": 1.0, "window": 0.05}
    factories = [
        StrategyFactory("random_counter", RandomCounterStrategy, {}),
        StrategyFactory("boulware", TimeDependentStrategy, {"e": 0.2, **curve}),
        StrategyFactory("conceder", TimeDependentStrategy, {"e": 2.0, **curve}),
        StrategyFactory("hardliner", HardlinerStrategy, {}),
        StrategyFactory("linear", TimeDependentStrategy, {"e": 1.0, **curve}),
        StrategyFactory(
            "tit_for_tat_relative",
            TitForTatRelativeStrategy,
            {"kappa": 0.6, "drift": 0.08, "floor": 0.55, "window": 0.025},
        ),
        StrategyFactory(
            "behavior_mirror",
            BehaviorMirrorStrategy,
            {"gain": round(float(rng.uniform(1.0, 1.5)), 3), "floor": 0.35, "window": 0.05},
        ),
        StrategyFactory(
            "boulware_jittered",
            JitteredTimeDependentStrategy,
            {"e": 0.2, "jitter": round(float(rng.uniform(0.04, 0.08)), 3), **curve},
        ),
        StrategyFactory(
            "stepped_concession",
            SteppedConcessionStrategy,
            {"period": 10, "step": round(float(rng.uniform(0.06, 0.10)), 3), "floor": 0.3, "window": 0.05},
        ),
        StrategyFactory(
            "meta_switcher",
            MetaSwitcherStrategy,
            {"period": 20, "e_tough": 0.2, "e_soft": 2.0, **curve},
        ),
    ]
    assert tuple(f.id for f in factories) == POOL_IDS
    return factories


def pool_manifest(pool: list[StrategyFactory]) -> list[dict]:
    return [{"id": factory.id, "params": dict(factory.params)} for factory in pool]


def pool_manifest_hash(pool: list[StrategyFactory]) -> str:
    canonical = json.dumps(pool_manifest(pool), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_STRATEGY_CLASSES: dict[str, type[Strategy]] = {
    "random_counter": RandomCounterStrategy,
    "boulware": TimeDependentStrategy,
    "conceder": TimeDependentStrategy,
    "hardliner": HardlinerStrategy,
    "linear": TimeDependentStrategy,
    "tit_for_tat_relative": TitForTatRelativeStrategy,
    "behavior_mirror": BehaviorMirrorStrategy,
    "boulware_jittered": JitteredTimeDependentStrategy,
    "stepped_concession": SteppedConcessionStrategy,
    "meta_switcher": MetaSwitcherStrategy,
    "nice_tit_for_tat": NiceTitForTatStrategy,
}


def pool_from_manifest(manifest: list[dict]) -> list[StrategyFactory]:
    """Rebuild factories from a stored manifest (id + parameter map each)."""
    factories = []
    for entry in manifest:
        strategy_id = entry["id"]
        if strategy_id not in _STRATEGY_CLASSES:
            raise KeyError(f"unknown strategy id in manifest: {strategy_id!r}")
        factories.append(
            StrategyFactory(strategy_id, _STRATEGY_CLASSES[strategy_id], dict(entry["params"]))
        )
    return factories
