"""Shared fixtures and hypothesis strategies for the negrec test suite."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from negrec.dataset import CampaignConfig, DomainSpec, OppositionBand, build_dataset
from negrec.domains import Domain, PreferenceProfile, generate_domain, generate_profile
from negrec.strategies import StrategyFactory, make_pool, pool_manifest


# ---------------------------------------------------------------------------
# Hypothesis strategies
# ---------------------------------------------------------------------------

seeds = st.integers(min_value=0, max_value=2**31 - 1)


@st.composite
def small_domains(draw, max_issues: int = 4, max_values: int = 4):
    """A randomly generated domain with a handful of issues and values."""
    n_issues = draw(st.integers(min_value=1, max_value=max_issues))
    values = draw(
        st.lists(
            st.integers(min_value=2, max_value=max_values),
            min_size=n_issues,
            max_size=n_issues,
        )
    )
    seed = draw(seeds)
    return generate_domain(n_issues=n_issues, values_per_issue=values, seed=seed)


@st.composite
def domain_profile_pairs(draw):
    """A small domain together with two profiles over it."""
    domain = draw(small_domains())
    seed_m = draw(seeds)
    seed_o = draw(seeds)
    profile_m = generate_profile(domain, seed=seed_m)
    profile_o = generate_profile(domain, seed=seed_o)
    return domain, profile_m, profile_o


# ---------------------------------------------------------------------------
# Cheap shared objects
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def bank_domain() -> Domain:
    return generate_domain(n_issues=3, values_per_issue=[3, 3, 2], seed=7, domain_id="bank")


@pytest.fixture(scope="session")
def bank_profiles(bank_domain) -> tuple[PreferenceProfile, PreferenceProfile]:
    return (
        generate_profile(bank_domain, seed=101),
        generate_profile(bank_domain, seed=55),
    )


def tiny_pool(seed: int = 7) -> list[StrategyFactory]:
    """A three-strategy pool that keeps campaign fixtures fast."""
    full = {factory.id: factory for factory in make_pool(seed=seed)}
    return [full["hardliner"], full["conceder"], full["random_counter"]]


def tiny_campaign_config(
    scenario,
    *,
    domains=(DomainSpec(name="bank", n_issues=3, values_per_issue=(3, 3, 2), seed=7),),
    bands=(OppositionBand(0.1, 0.3),),
    sessions_per_cell: int = 6,
    checkpoints=(5, 10),
    deadline: int = 10,
    pool=None,
    **kwargs,
) -> CampaignConfig:
    """A deliberately small campaign used by dataset and experiment tests."""
    if pool is None:
        pool = pool_manifest(tiny_pool())
    return CampaignConfig(
        scenario=scenario,
        domains=tuple(domains),
        bands=tuple(bands),
        pool=tuple(pool),
        sessions_per_cell=sessions_per_cell,
        deadline=deadline,
        checkpoints=tuple(checkpoints),
        **kwargs,
    )


@pytest.fixture(scope="session")
def tiny_p2_campaign(tmp_path_factory):
    """A built three-strategy campaign shared by read-only tests."""
    from negrec.features import Scenario

    root = tmp_path_factory.mktemp("tiny-p2")
    config = tiny_campaign_config(Scenario.P2)
    campaign_dir = build_dataset(config, root)
    return config, campaign_dir


def assert_close(a, b, tol: float = 1e-12) -> None:
    """Assert two arrays (or scalars) agree to within an absolute tolerance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    assert a.shape == b.shape
    assert np.all(np.abs(a - b) <= tol), f"max err {np.max(np.abs(a - b)):.3e}"
