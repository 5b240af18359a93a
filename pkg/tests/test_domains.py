"""Tests for domain/profile generation, utilities, and opposition."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negrec.domains import (
    Domain,
    DomainMismatchError,
    Issue,
    OutcomeSpaceTooLargeError,
    PreferenceProfile,
    best_bid,
    domain_from_json,
    domain_to_json,
    evaluate_utility,
    generate_domain,
    generate_profile,
    opposition,
    opposition_sampled,
    outcome_index_matrix,
    profile_from_json,
    profile_to_json,
    utilities_of_all_bids,
)
from tests.conftest import assert_close, domain_profile_pairs, seeds, small_domains


def _manual_profile(domain_id: str, weights, evaluations, pid: str = "manual"):
    return PreferenceProfile(
        id=pid,
        domain_id=domain_id,
        weights=tuple(weights),
        evaluations=tuple(tuple(row) for row in evaluations),
    )


# ---------------------------------------------------------------------------
# Construction and validation
# ---------------------------------------------------------------------------


def test_issue_rejects_degenerate_values():
    with pytest.raises(ValueError):
        Issue(name="x", values=("only",))
    with pytest.raises(ValueError):
        Issue(name="x", values=("a", "a"))


def test_domain_needs_issues():
    with pytest.raises(ValueError):
        Domain(id="empty", issues=())


def test_profile_validation():
    with pytest.raises(ValueError):
        _manual_profile("d", [0.5, 0.6], [(1.0, 0.0), (1.0, 0.0)])  # weights != 1
    with pytest.raises(ValueError):
        _manual_profile("d", [1.0], [(1.0, 1.5)])  # evaluation > 1
    with pytest.raises(ValueError):
        _manual_profile("d", [1.0], [(0.5, 0.9)])  # no value with evaluation 1
    with pytest.raises(ValueError):
        _manual_profile("d", [1.0, -0.0001, 0.0001], [(1.0,)] * 3)  # negative weight


def test_validate_bid_errors(bank_domain):
    with pytest.raises(DomainMismatchError):
        bank_domain.validate_bid((0, 0))
    with pytest.raises(DomainMismatchError):
        bank_domain.validate_bid((0, 0, 5))


def test_profile_check_domain_mismatch(bank_domain):
    profile = _manual_profile("other", [1.0], [(1.0, 0.0)])
    with pytest.raises(DomainMismatchError):
        profile.check_domain(bank_domain)


# ---------------------------------------------------------------------------
# Utility evaluation
# ---------------------------------------------------------------------------


def test_evaluate_utility_hand_case():
    """Weighted sum over a two-issue profile, worked by hand."""
    profile = _manual_profile(
        "d", [0.7, 0.3], [(1.0, 0.2), (0.5, 1.0)]
    )
    assert_close(evaluate_utility(profile, (0, 0)), 0.7 * 1.0 + 0.3 * 0.5)
    assert_close(evaluate_utility(profile, (1, 1)), 0.7 * 0.2 + 0.3 * 1.0)
    assert_close(evaluate_utility(profile, (0, 1)), 1.0)


@given(pair=domain_profile_pairs())
@settings(max_examples=50, deadline=None)
def test_utilities_within_unit_interval(pair):
    domain, profile, _ = pair
    utilities = utilities_of_all_bids(domain, profile)
    assert utilities.shape == (domain.n_outcomes,)
    assert np.all(utilities >= 0.0)
    assert np.all(utilities <= 1.0 + 1e-12)


@given(pair=domain_profile_pairs())
@settings(max_examples=30, deadline=None)
def test_vectorised_utilities_match_scalar(pair):
    """utilities_of_all_bids must agree with evaluate_utility bid by bid."""
    domain, profile, _ = pair
    fast = utilities_of_all_bids(domain, profile)
    slow = np.array([evaluate_utility(profile, bid) for bid in domain.iter_bids()])
    assert_close(fast, slow)


@given(pair=domain_profile_pairs())
@settings(max_examples=30, deadline=None)
def test_best_bid_reaches_utility_one(pair):
    """Every issue has a value evaluated at 1, so the best bid scores exactly 1."""
    domain, profile, _ = pair
    assert_close(evaluate_utility(profile, best_bid(domain, profile)), 1.0)


def test_outcome_index_matrix_order(bank_domain):
    matrix = outcome_index_matrix(bank_domain)
    assert matrix.shape == (18, 3)
    assert [tuple(row) for row in matrix] == list(bank_domain.iter_bids())


def test_outcome_matrix_rejects_huge_domains():
    domain = generate_domain(n_issues=8, values_per_issue=[8] * 8, seed=0)
    with pytest.raises(OutcomeSpaceTooLargeError):
        outcome_index_matrix(domain)


# ---------------------------------------------------------------------------
# Opposition
# ---------------------------------------------------------------------------


def test_opposition_hand_case_competitive():
    """One issue, two values, perfectly opposed preferences: both outcomes sit
    at distance sqrt(0.5^2 + 0) ... worked out by hand below."""
    domain = Domain(id="coin", issues=(Issue(name="side", values=("h", "t")),))
    a = _manual_profile("coin", [1.0], [(1.0, 0.5)], pid="a")
    b = _manual_profile("coin", [1.0], [(0.5, 1.0)], pid="b")
    # outcome (0,): (1.0, 0.5) -> dist 0.5; outcome (1,): (0.5, 1.0) -> dist 0.5
    assert_close(opposition(domain, a, b), 0.5)


def test_opposition_zero_when_fully_compatible():
    domain = Domain(id="coin", issues=(Issue(name="side", values=("h", "t")),))
    a = _manual_profile("coin", [1.0], [(1.0, 0.0)], pid="a")
    b = _manual_profile("coin", [1.0], [(1.0, 0.0)], pid="b")
    assert_close(opposition(domain, a, b), 0.0)


@given(pair=domain_profile_pairs())
@settings(max_examples=40, deadline=None)
def test_opposition_properties(pair):
    domain, a, b = pair
    value = opposition(domain, a, b)
    assert 0.0 <= value <= math.sqrt(2.0)
    assert_close(opposition(domain, b, a), value)
    # Both best bids bound the distance: some outcome gives one side utility 1.
    assert value <= 1.0 + 1e-12


@given(pair=domain_profile_pairs())
@settings(max_examples=20, deadline=None)
def test_opposition_matches_bruteforce(pair):
    """Independent brute force over the full outcome space."""
    domain, a, b = pair
    best = min(
        math.hypot(1.0 - evaluate_utility(a, bid), 1.0 - evaluate_utility(b, bid))
        for bid in domain.iter_bids()
    )
    assert_close(opposition(domain, a, b), best)


def test_opposition_sampled_close_to_exact(bank_domain, bank_profiles):
    profile_m, profile_o = bank_profiles
    exact = opposition(bank_domain, profile_m, profile_o)
    sampled = opposition_sampled(bank_domain, profile_m, profile_o, n_samples=4000, seed=3)
    # Sampling can only miss the minimising outcome, never undershoot it.
    assert sampled >= exact - 1e-12
    assert sampled - exact < 0.2


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "n_issues,values,seed,expected_outcomes",
    [
        (3, [3, 3, 2], 7, 18),
        (4, [4, 4, 5, 3], 1, 240),
        (5, [5, 5, 5, 6, 15], 11, 11250),
        (7, [2, 2, 3, 3, 3, 3, 3], 3, 972),
    ],
)
def test_generate_domain_sizes(n_issues, values, seed, expected_outcomes):
    domain = generate_domain(n_issues=n_issues, values_per_issue=values, seed=seed)
    assert domain.n_issues == n_issues
    assert domain.n_outcomes == expected_outcomes


def test_generate_domain_validation():
    with pytest.raises(ValueError):
        generate_domain(n_issues=0, values_per_issue=[], seed=0)
    with pytest.raises(ValueError):
        generate_domain(n_issues=2, values_per_issue=[3], seed=0)
    with pytest.raises(ValueError):
        generate_domain(n_issues=1, values_per_issue=[1], seed=0)


@given(seed=seeds)
@settings(max_examples=25, deadline=None)
def test_generate_domain_deterministic(seed):
    a = generate_domain(n_issues=2, values_per_issue=[3, 2], seed=seed)
    b = generate_domain(n_issues=2, values_per_issue=[3, 2], seed=seed)
    assert a == b


@given(domain=small_domains(), seed=seeds)
@settings(max_examples=25, deadline=None)
def test_generate_profile_deterministic_and_valid(domain, seed):
    a = generate_profile(domain, seed=seed)
    b = generate_profile(domain, seed=seed)
    assert a == b
    a.check_domain(domain)  # raises on any inconsistency
    assert_close(sum(a.weights), 1.0, tol=1e-9)


def test_generate_profile_ids_mention_seed(bank_domain):
    profile = generate_profile(bank_domain, seed=42)
    assert profile.id == "bank-prof-s42"
    named = generate_profile(bank_domain, seed=42, profile_id="custom")
    assert named.id == "custom"
    assert named.weights == profile.weights


def test_different_seeds_give_different_profiles(bank_domain):
    a = generate_profile(bank_domain, seed=1)
    b = generate_profile(bank_domain, seed=2)
    assert a.weights != b.weights or a.evaluations != b.evaluations


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------


@given(pair=domain_profile_pairs())
@settings(max_examples=25, deadline=None)
def test_json_round_trips(pair):
    domain, profile, _ = pair
    assert domain_from_json(domain_to_json(domain)) == domain
    assert profile_from_json(profile_to_json(profile)) == profile
