"""Multi-issue negotiation domains and linear-additive preference profiles.

A domain is an ordered list of discrete issues; a bid picks one value index
per issue.  Profiles carry normalized issue weights and per-value evaluations
in [0, 1], with each issue's best value pinned to evaluation 1 so a utility-1
bid always exists.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

# A bid is one value index per issue, in domain issue order.
Bid = tuple[int, ...]

ENUMERATION_CAP = 1_000_000
OPPOSITION_SAMPLE_SIZE = 100_000
WEIGHT_TOL = 1e-9


class DomainMismatchError(ValueError):
    """Bid or profile does not structurally match the domain it is used with."""


class OutcomeSpaceTooLargeError(ValueError):
    """Exact enumeration was requested above the enumeration cap."""


@dataclass(frozen=True)
class Issue:
    name: str
    values: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.values) < 2:
            raise ValueError(f"issue {self.name!r} needs >= 2 values")
        if len(set(self.values)) != len(self.values):
            raise ValueError(f"issue {self.name!r} has duplicate value labels")


@dataclass(frozen=True)
class Domain:
    id: str
    issues: tuple[Issue, ...]

    def __post_init__(self) -> None:
        if not self.issues:
            raise ValueError("domain needs >= 1 issue")

    @property
    def n_issues(self) -> int:
        return len(self.issues)

    @property
    def n_outcomes(self) -> int:
        return math.prod(len(issue.values) for issue in self.issues)

    def iter_bids(self) -> Iterator[Bid]:
        ranges = [range(len(issue.values)) for issue in self.issues]
        return iter(itertools.product(*ranges))

    def validate_bid(self, bid: Bid) -> None:
        if len(bid) != self.n_issues:
            raise DomainMismatchError(
                f"bid has {len(bid)} entries, domain {self.id!r} has {self.n_issues} issues"
            )
        for k, (index, issue) in enumerate(zip(bid, self.issues)):
            if not 0 <= index < len(issue.values):
                raise DomainMismatchError(
                    f"bid index {index} out of range for issue {k} ({issue.name!r})"
                )


@dataclass(frozen=True)
class PreferenceProfile:
    """Linear-additive utility function: weights sum to 1, evaluations in [0, 1]."""

    id: str
    domain_id: str
    weights: tuple[float, ...]
    evaluations: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.evaluations):
            raise ValueError("weights and evaluation tables disagree on issue count")
        if any(w < 0 for w in self.weights):
            raise ValueError("issue weights must be non-negative")
        if abs(sum(self.weights) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"issue weights must sum to 1, got {sum(self.weights)!r}")
        for k, table in enumerate(self.evaluations):
            if any(not 0.0 <= e <= 1.0 for e in table):
                raise ValueError(f"evaluations for issue {k} outside [0, 1]")
            if max(table) != 1.0:
                raise ValueError(f"issue {k} has no value with evaluation 1")

    def check_domain(self, domain: Domain) -> None:
        if self.domain_id != domain.id or len(self.evaluations) != domain.n_issues:
            raise DomainMismatchError(
                f"profile {self.id!r} is for domain {self.domain_id!r}, not {domain.id!r}"
            )
        for k, (issue, table) in enumerate(zip(domain.issues, self.evaluations)):
            if len(table) != len(issue.values):
                raise DomainMismatchError(f"evaluation table size mismatch on issue {k}")


def evaluate_utility(profile: PreferenceProfile, bid: Bid) -> float:
    """Weighted sum of per-issue evaluations for the bid; always in [0, 1]."""
    if len(bid) != len(profile.weights):
        raise DomainMismatchError(
            f"bid has {len(bid)} entries, profile {profile.id!r} expects {len(profile.weights)}"
        )
    total = 0.0
    for w, table, index in zip(profile.weights, profile.evaluations, bid):
        if not 0 <= index < len(table):
            raise DomainMismatchError(f"bid index {index} out of range for profile {profile.id!r}")
        total += w * table[index]
    return total


@lru_cache(maxsize=64)
def outcome_index_matrix(domain: Domain) -> np.ndarray:
    """All bids of the domain as an (n_outcomes, n_issues) int array, row = bid.

    Rows follow ``Domain.iter_bids`` order.  Cached per domain; the array is
    marked read-only so cached state cannot be mutated by callers.
    """
    if domain.n_outcomes > ENUMERATION_CAP:
        raise OutcomeSpaceTooLargeError(
            f"domain {domain.id!r} has {domain.n_outcomes} outcomes "
            f"(cap {ENUMERATION_CAP}); use sampled evaluation instead"
        )
    matrix = np.array(list(domain.iter_bids()), dtype=np.int64)
    matrix.setflags(write=False)
    return matrix


def utilities_of_all_bids(domain: Domain, profile: PreferenceProfile) -> np.ndarray:
    """Utility of every bid in ``outcome_index_matrix`` order, vectorized."""
    profile.check_domain(domain)
    matrix = outcome_index_matrix(domain)
    total = np.zeros(matrix.shape[0])
    for k, (w, table) in enumerate(zip(profile.weights, profile.evaluations)):
        total += w * np.asarray(table)[matrix[:, k]]
    return total


def opposition(domain: Domain, profile_a: PreferenceProfile, profile_b: PreferenceProfile) -> float:
    """Competitiveness of two profiles on a domain.

    Defined as the minimum over all outcomes of the Euclidean distance from
    the joint-utility point (U_a, U_b) to the ideal point (1, 1).  Zero means
    a mutually perfect outcome exists; higher values mean more conflict.

    Raises :class:`OutcomeSpaceTooLargeError` above the enumeration cap;
    use :func:`opposition_sampled` there.
    """
    u_a = utilities_of_all_bids(domain, profile_a)
    u_b = utilities_of_all_bids(domain, profile_b)
    return float(np.sqrt(np.min((1.0 - u_a) ** 2 + (1.0 - u_b) ** 2)))


def opposition_sampled(
    domain: Domain,
    profile_a: PreferenceProfile,
    profile_b: PreferenceProfile,
    seed: int,
    n_samples: int = OPPOSITION_SAMPLE_SIZE,
) -> float:
    """Approximate opposition from a uniform sample of outcomes.

    Upper-bounds the exact value (the sample may miss the minimizer); intended
    for domains above the enumeration cap.
    """
    profile_a.check_domain(domain)
    profile_b.check_domain(domain)
    rng = np.random.default_rng(np.random.SeedSequence((seed,)))
    sizes = [len(issue.values) for issue in domain.issues]
    columns = [rng.integers(0, size, size=n_samples) for size in sizes]
    u_a = np.zeros(n_samples)
    u_b = np.zeros(n_samples)
    for k, column in enumerate(columns):
        u_a += profile_a.weights[k] * np.asarray(profile_a.evaluations[k])[column]
        u_b += profile_b.weights[k] * np.asarray(profile_b.evaluations[k])[column]
    return float(np.sqrt(np.min((1.0 - u_a) ** 2 + (1.0 - u_b) ** 2)))


def generate_domain(
    n_issues: int,
    values_per_issue: Sequence[int],
    seed: int,
    domain_id: str | None = None,
) -> Domain:
    """Synthesize a domain with labelled values; deterministic in its arguments."""
    if n_issues < 1:
        raise ValueError("n_issues must be >= 1")
    if len(values_per_issue) != n_issues:
        raise ValueError("values_per_issue length must equal n_issues")
    if any(count < 2 for count in values_per_issue):
        raise ValueError("every issue needs >= 2 values")
    issues = tuple(
        Issue(name=f"i{k}", values=tuple(f"i{k}v{j}" for j in range(count)))
        for k, count in enumerate(values_per_issue)
    )
    if domain_id is None:
        size = math.prod(values_per_issue)
        domain_id = f"dom{n_issues}x{size}-s{seed}"
    return Domain(id=domain_id, issues=issues)


def generate_profile(domain: Domain, seed: int, profile_id: str | None = None) -> PreferenceProfile:
    """Draw a random profile for the domain; deterministic in (domain, seed).

    Weights come from a positive uniform draw normalized to sum 1.  Each
    issue's evaluations are a random permutation of values linearly spaced in
    [1/|V|, 1], so the top value evaluates to exactly 1.
    """
    rng = np.random.default_rng(np.random.SeedSequence((_stable_hash(domain.id), seed)))
    raw = rng.uniform(0.1, 1.0, size=domain.n_issues)
    weights = raw / raw.sum()
    # Re-normalize in plain floats so the profile invariant holds bit-exactly.
    weights = tuple(float(w) for w in weights)
    correction = sum(weights)
    weights = tuple(w / correction for w in weights)
    evaluations = []
    for issue in domain.issues:
        count = len(issue.values)
        spaced = np.linspace(1.0 / count, 1.0, count)
        evaluations.append(tuple(float(e) for e in rng.permutation(spaced)))
    if profile_id is None:
        profile_id = f"{domain.id}-prof-s{seed}"
    return PreferenceProfile(
        id=profile_id,
        domain_id=domain.id,
        weights=weights,
        evaluations=tuple(evaluations),
    )


def best_bid(domain: Domain, profile: PreferenceProfile) -> Bid:
    """The profile's utility-1 bid (first argmax value per issue)."""
    profile.check_domain(domain)
    return tuple(table.index(max(table)) for table in profile.evaluations)


def _stable_hash(text: str) -> int:
    # Process-independent replacement for hash(); used only to mix ids into seeds.
    value = 0
    for ch in text.encode("utf-8"):
        value = (value * 131 + ch) % (2**63)
    return value


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def domain_to_json(domain: Domain) -> dict:
    return {
        "id": domain.id,
        "issues": [{"name": issue.name, "values": list(issue.values)} for issue in domain.issues],
    }


def domain_from_json(doc: dict) -> Domain:
    issues = tuple(Issue(name=item["name"], values=tuple(item["values"])) for item in doc["issues"])
    return Domain(id=doc["id"], issues=issues)


def profile_to_json(profile: PreferenceProfile) -> dict:
    return {
        "id": profile.id,
        "domain_id": profile.domain_id,
        "weights": list(profile.weights),
        "evaluations": [list(table) for table in profile.evaluations],
    }


def profile_from_json(doc: dict) -> PreferenceProfile:
    return PreferenceProfile(
        id=doc["id"],
        domain_id=doc["domain_id"],
        weights=tuple(doc["weights"]),
        evaluations=tuple(tuple(table) for table in doc["evaluations"]),
    )


def save_json(doc: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)
