import pytest
from hypothesis import given, strategies as st

from edgetrack.reid_model import (DEFAULT_PROFILE, CascadeProfile, Granularity, MatchOutcome,
                                  VehicleAttributes, cumulative_cost, match)


def test_default_costs_ms():
    assert cumulative_cost(DEFAULT_PROFILE, Granularity.COLOR) == pytest.approx(0.5e-3)
    assert cumulative_cost(DEFAULT_PROFILE, Granularity.MODEL_MAKE) == pytest.approx(41.1e-3)
    assert cumulative_cost(DEFAULT_PROFILE, Granularity.FULL) == pytest.approx(351.2e-3)


def test_from_ms_accumulates():
    prof = CascadeProfile.from_ms(0.5, 40.6, 310.1)
    assert prof.as_ms() == pytest.approx(DEFAULT_PROFILE.as_ms())


@pytest.mark.parametrize("e", [(0, 1, 2), (1, 1, 2), (1, 3, 2)])
def test_profile_ordering_enforced(e):
    with pytest.raises(ValueError):
        CascadeProfile(*e)


def test_silver_same_colour_is_suspect_at_colour():
    suv = VehicleAttributes("A", "silver", "bmw x3")
    sedan = VehicleAttributes("B", "silver", "vw passat")
    assert match(Granularity.COLOR, sedan, suv) is MatchOutcome.SUSPECT


def test_full_identical_identity_confirms():
    v = VehicleAttributes("A", "red", "audi a6")
    assert match(Granularity.FULL, v, v) is MatchOutcome.CONFIRM


def test_model_mismatch_rejects():
    voi = VehicleAttributes("A", "red", "audi a6")
    cand = VehicleAttributes("B", "red", "ford focus")
    assert match(Granularity.MODEL_MAKE, cand, voi) is MatchOutcome.REJECT


def test_full_lookalike_rejected():
    voi = VehicleAttributes("A", "red", "audi a6")
    twin = VehicleAttributes("B", "red", "audi a6")
    assert match(Granularity.MODEL_MAKE, twin, voi) is MatchOutcome.SUSPECT
    assert match(Granularity.FULL, twin, voi) is MatchOutcome.REJECT


attrs = st.builds(VehicleAttributes, st.sampled_from("ABC"), st.sampled_from(["red", "blue"]),
                  st.sampled_from(["m1", "m2"]))


@given(attrs, attrs)
def test_finer_granularity_never_loosens(cand, voi):
    # once a coarse stage rejects, no finer stage may accept
    rank = {MatchOutcome.REJECT: 0, MatchOutcome.SUSPECT: 1, MatchOutcome.CONFIRM: 1}
    outs = [match(g, cand, voi) for g in Granularity]
    for coarse, fine in zip(outs, outs[1:]):
        if coarse is MatchOutcome.REJECT:
            assert fine is MatchOutcome.REJECT
        assert rank[fine] <= rank[coarse]
    # only the full cascade can confirm
    assert MatchOutcome.CONFIRM not in outs[:2]
