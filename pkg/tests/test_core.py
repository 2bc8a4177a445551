import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mwld.core import (
    IMPOSSIBLE_K_MESSAGE,
    ExplicitSet,
    GroupMask,
    LargeGroup,
    LossVector,
    PowerK,
    SizePower,
    Unit,
    check_labels,
    factorize_keys,
    group_fraction,
    group_mean,
    weighted_discrepancy,
)

QUARTET = [0.0, 0.2, 0.8, 1.0]


def test_group_fraction_examples():
    lv = LossVector(QUARTET)
    assert group_fraction(lv, [True, True, False, False]) == 0.5
    assert group_fraction(lv, [True] * 4) == 1.0
    weighted = LossVector(QUARTET, weights=[0.1, 0.2, 0.3, 0.4])
    assert group_fraction(weighted, [False, False, True, True]) == pytest.approx(0.7, abs=1e-15)


def test_group_mean_examples():
    assert group_mean(LossVector([0, 1, 0, 1]), [False, True, False, True]) == 1.0
    assert group_mean(LossVector(QUARTET), [True, True, False, False]) == pytest.approx(0.1, abs=1e-15)
    assert group_mean(LossVector([0.5]), [True]) == 0.5


def test_weighted_discrepancy_examples():
    lv = LossVector(QUARTET)
    assert weighted_discrepancy(lv, [1, 1, 0, 0], PowerK(0.5)) == pytest.approx(np.sqrt(0.5) * 0.4, abs=1e-12)
    assert weighted_discrepancy(lv, [1, 1, 1, 1], PowerK(0.5)) == 0.0
    assert weighted_discrepancy(LossVector([0, 1]), [0, 1], PowerK(1)) == pytest.approx(0.25)


def test_empty_group_is_an_error():
    lv = LossVector(QUARTET)
    with pytest.raises(ValueError):
        group_mean(lv, [False] * 4)
    with pytest.raises(ValueError):
        weighted_discrepancy(lv, [False] * 4, PowerK(1))


def test_mask_length_must_match():
    with pytest.raises(ValueError):
        group_mean(LossVector(QUARTET), [True, False])


def test_k_zero_is_rejected_with_explanation():
    with pytest.raises(ValueError, match="k = 0"):
        PowerK(0)
    assert "converge" in IMPOSSIBLE_K_MESSAGE
    for bad in (-0.5, 1.5, float("nan")):
        with pytest.raises(ValueError):
            PowerK(bad)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(values=[]),
        dict(values=[0.1, np.nan]),
        dict(values=[-0.1, 0.2]),
        dict(values=[0.5, 2.0]),
        dict(values=[0.1, 0.2], weights=[0.5, 0.6]),
        dict(values=[0.1, 0.2], weights=[1.5, -0.5]),
        dict(values=[0.1, 0.2], weights=[1.0]),
        dict(values=[0.1], loss_bound_L=0.0),
    ],
)
def test_loss_vector_validation(kwargs):
    with pytest.raises(ValueError):
        LossVector(**kwargs)


def test_loss_vector_is_immutable():
    lv = LossVector([0.1, 0.2])
    with pytest.raises(ValueError):
        lv.values[0] = 0.5


def test_rescaled_divides_by_bound():
    lv = LossVector([0.0, 2.0, 4.0], loss_bound_L=4.0).rescaled()
    np.testing.assert_array_equal(lv.values, [0.0, 0.5, 1.0])
    assert lv.loss_bound_L == 1.0


def test_explicit_set_weight_rules():
    masks = [[1, 1, 0, 0]]
    lv = LossVector(QUARTET)
    assert weighted_discrepancy(lv, masks[0], ExplicitSet(masks, Unit())) == pytest.approx(0.4)
    assert weighted_discrepancy(lv, masks[0], ExplicitSet(masks, SizePower(1))) == pytest.approx(0.2)


def test_large_group_weighting_is_an_indicator():
    lv = LossVector(QUARTET)
    assert weighted_discrepancy(lv, [1, 0, 0, 0], LargeGroup(0.5)) == 0.0
    assert weighted_discrepancy(lv, [1, 1, 0, 0], LargeGroup(0.5)) == pytest.approx(0.4)


def test_mask_helpers():
    m = GroupMask.from_indices(5, [0, 3])
    assert m.size == 2
    assert m.complement().size == 3
    with pytest.raises(ValueError):
        GroupMask([0, 2, 1])


def test_check_labels_and_keys():
    np.testing.assert_array_equal(check_labels([0, 1, 1]), [0, 1, 1])
    with pytest.raises(ValueError):
        check_labels([0, 2])
    with pytest.raises(ValueError):
        check_labels([0, 1], n=3)
    codes, uniques = factorize_keys([("a", 1), ("b", 0), ("a", 1)])
    np.testing.assert_array_equal(codes, [0, 1, 0])
    assert len(uniques) == 2


# -- properties ---------------------------------------------------------------

unit_floats = st.floats(0.0, 1.0, allow_nan=False, allow_subnormal=False)


@st.composite
def losses_and_mask(draw, max_n=30):
    n = draw(st.integers(2, max_n))
    values = draw(arrays(float, n, elements=unit_floats))
    mask = draw(arrays(bool, n))
    if not mask.any():
        mask[draw(st.integers(0, n - 1))] = True
    return LossVector(values), mask


@given(losses_and_mask(), st.floats(0.01, 1.0))
def test_discrepancy_is_bounded(case, k):
    lv, mask = case
    d = weighted_discrepancy(lv, mask, PowerK(k))
    assert 0.0 <= d <= lv.loss_bound_L


@given(losses_and_mask(), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_discrepancy_nonincreasing_in_k(case, k1, k2):
    lv, mask = case
    lo, hi = sorted((k1, k2))
    assert weighted_discrepancy(lv, mask, PowerK(hi)) <= weighted_discrepancy(lv, mask, PowerK(lo)) + 1e-15


@settings(max_examples=200)
@given(losses_and_mask())
def test_complement_symmetry(case):
    lv, mask = case
    if mask.all():
        return
    mu = lv.mean()
    inside = group_fraction(lv, mask) * (group_mean(lv, mask) - mu)
    outside = group_fraction(lv, ~mask) * (group_mean(lv, ~mask) - mu)
    assert inside == pytest.approx(-outside, abs=1e-12)


@given(arrays(float, st.integers(1, 40), elements=unit_floats))
def test_full_group_is_exactly_zero(values):
    lv = LossVector(values)
    assert weighted_discrepancy(lv, np.ones(lv.n, bool), PowerK(0.3)) == 0.0
