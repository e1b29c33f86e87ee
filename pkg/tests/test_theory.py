import math
import warnings

import pytest
from hypothesis import given, seed
from hypothesis import strategies as st

from muonbp.theory import (
    BoundInputs,
    arithmetic_smoothness,
    harmonic_smoothness,
    ntr_bound,
    optimal_stepsizes,
    theorem2_bound,
    tied_bound,
    two_stepsize_bound,
)

# frozen oracles, checked by hand against the closed forms
BOUND_INPUTS = BoundInputs(0.05, 0.02, 5, 100, 0.9, 0.3, 10.0, 8.0, 32.0, 1, 4)
BOUND_VALUE = 34.04054719301378
NTR_VALUE = 8.284378135860944

periods = st.one_of(st.integers(1, 50), st.just(math.inf))
smooth = st.floats(0.1, 100.0)


def test_optimal_stepsize_oracle():
    opt = optimal_stepsizes(8.0, 32.0, 10.0, 100, 5)
    assert opt.L_bp == pytest.approx(20.0, rel=1e-15)
    assert opt.L_bp2 == pytest.approx(27.2, rel=1e-15)
    assert opt.eta_full == pytest.approx(0.25, rel=1e-15)
    assert opt.eta_block == pytest.approx(0.0625, rel=1e-15)
    assert opt.eta_tied == pytest.approx(math.sqrt(20.0 / (100 * 27.2)), rel=1e-15)


def test_bound_terms_oracle():
    assert BOUND_INPUTS.eta_bar == pytest.approx(0.026)
    assert BOUND_INPUTS.A == pytest.approx(0.05 * math.sqrt(8))
    assert BOUND_INPUTS.Q == pytest.approx(0.00712)
    assert BOUND_INPUTS.R == pytest.approx(0.5328)
    assert theorem2_bound(BOUND_INPUTS) == pytest.approx(BOUND_VALUE, rel=1e-13)


def test_ntr_bound_oracle():
    assert ntr_bound(0.05, 0.9, 0.3, 10.0, 8.0, 100) == pytest.approx(NTR_VALUE, rel=1e-13)


@seed(41)
@given(smooth, smooth, periods)
def test_smoothness_means_lie_between_endpoints(a, b, P):
    lo, hi = min(a, b), max(a, b)
    h, m = harmonic_smoothness(a, b, P), arithmetic_smoothness(a, b, P)
    assert lo * (1 - 1e-12) <= h <= m * (1 + 1e-12)
    assert m <= hi * (1 + 1e-12)


@seed(42)
@given(smooth, st.floats(1.0, 10.0), st.floats(0.1, 100.0), st.integers(1, 40).map(lambda k: 10 * k),
       st.sampled_from([1, 2, 5, 10, math.inf]))
def test_bound_at_optimum_closed_form(L_op, ratio, d0, T, P):
    L_B = L_op * ratio
    opt = optimal_stepsizes(L_op, L_B, d0, T, P)
    assert two_stepsize_bound(L_op, L_B, d0, T, P) == pytest.approx(
        math.sqrt(2 * d0 * opt.L_bp / T), rel=1e-12)


@seed(43)
@given(smooth, st.floats(1.01, 10.0), st.integers(1, 20).map(lambda k: 10 * k), st.sampled_from([2, 5, 10]))
def test_two_stepsizes_beat_tied(L_op, ratio, T, P):
    assert two_stepsize_bound(L_op, L_op * ratio, 1.0, T, P) < tied_bound(L_op, L_op * ratio, 1.0, T, P)


def test_bound_monotone_in_period():
    values = [two_stepsize_bound(8.0, 32.0, 10.0, 100, P) for P in (1, 2, 5, 10, math.inf)]
    assert values == sorted(values)


def test_endpoint_periods_reduce_to_single_regime():
    opt = optimal_stepsizes(8.0, 32.0, 10.0, 100, 1)
    assert opt.L_bp == 8.0 and opt.eta_tied == pytest.approx(opt.eta_full)
    opt = optimal_stepsizes(8.0, 32.0, 10.0, 100, math.inf)
    assert opt.L_bp == 32.0 and opt.eta_tied == pytest.approx(opt.eta_block)


def test_validation():
    with pytest.raises(ValueError, match="divisible"):
        BoundInputs(0.1, 0.1, 3, 100, 0.0, 0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        BoundInputs(0.1, 0.1, 5, 100, 1.0, 0.0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        optimal_stepsizes(0.0, 1.0, 1.0, 10, 5)
    with pytest.warns(UserWarning, match="exceeds"):
        optimal_stepsizes(2.0, 1.0, 1.0, 10, 5)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        optimal_stepsizes(1.0, 2.0, 1.0, 10, 5)
