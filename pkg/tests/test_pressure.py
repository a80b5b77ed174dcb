import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from dwlab.dynamics import BolzaFlow, DoublingMap, FlatGeodesicFlow, a_u_field, constant_field
from dwlab.errors import InvalidInputError
from dwlab.geometry import Constant, FlatTorus
from dwlab.pressure import (
    PressureConfig,
    bowen_distance,
    bowen_times,
    closed_form_pressure,
    enumerate_words,
    gap_condition,
    pressure_cover,
    pressure_schedule,
    pressure_separated,
    pressure_transfer,
    separated_subset,
)

LOG2 = math.log(2)
# frozen closed forms
FULL_3_SHIFT = 0.3986122886681098  # log 3 - 0.7
GOLDEN = 0.48121182505960347  # log((1 + sqrt 5) / 2)


def shifted(f, c):
    return lambda states: f(states) + c


def test_transfer_examples():
    assert abs(pressure_transfer(np.ones((3, 3)), [-0.7] * 3).value - FULL_3_SHIFT) < 1e-12
    assert abs(pressure_transfer([[1, 1], [1, 0]], [0, 0]).value - GOLDEN) < 1e-10


def test_transfer_periodic_shift_converges():
    assert abs(pressure_transfer([[0, 1], [1, 0]], [0.3, -0.1]).value - 0.1) < 1e-12


def test_transfer_rejects_reducible():
    with pytest.raises(InvalidInputError, match="unreachable"):
        pressure_transfer([[1, 1], [0, 1]], [0, 0])
    with pytest.raises(InvalidInputError, match="0/1"):
        pressure_transfer([[2, 1], [1, 1]], [0, 0])


@settings(max_examples=25, deadline=None)
@given(
    w=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    c=st.floats(-5, 5),
)
def test_transfer_shift_additivity(w, c):
    A = np.array([[1, 1, 0], [0, 1, 1], [1, 1, 1]])
    base = pressure_transfer(A, w).value
    assert abs(pressure_transfer(A, np.asarray(w) + c).value - base - c) < 1e-9


@settings(max_examples=15, deadline=None)
@given(
    bits=st.lists(st.integers(0, 1), min_size=9, max_size=9),
    w=st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    T=st.integers(2, 8),
)
def test_word_enumeration_bracket(bits, w, T):
    A = np.array(bits).reshape(3, 3)
    np.fill_diagonal(A, 1)
    A[0, 1] = A[1, 2] = A[2, 0] = 1  # keep it irreducible
    exact = pressure_transfer(A, w).value
    assert abs(enumerate_words(A, w, T) - exact) <= 2 / T * math.log(3) + 1e-12


def doubling_cfg(**kw):
    base = dict(epsilon_list=(2.0**-5,), T_list=(6,), sample_budget=100_000, seed=0)
    base.update(kw)
    return PressureConfig(**base)


def test_separated_doubling_entropy():
    est = pressure_separated(DoublingMap(), constant_field(0.0), doubling_cfg())
    assert abs(est.value - LOG2) < 0.05 * LOG2


def test_separated_doubling_srb_weight():
    est = pressure_separated(DoublingMap(), constant_field(-LOG2), doubling_cfg())
    assert abs(est.value) < 0.05


def test_separated_additivity():
    space = DoublingMap()
    f = lambda states: np.cos(2 * np.pi * states)  # noqa: E731
    base = pressure_separated(space, f, doubling_cfg())
    moved = pressure_separated(space, shifted(f, 0.37), doubling_cfg())
    assert moved.params["n_separated"] == base.params["n_separated"]
    assert abs(moved.value - base.value - 0.37) < 1e-12


def test_separated_set_is_separated_and_maximal():
    space = FlatGeodesicFlow(FlatTorus(1.0, 1.0, 8, 8))
    states = space.sample(600, np.random.default_rng(1))
    eps, T = 0.08, 2
    keep = separated_subset(space, states, eps, T)
    times = bowen_times(space, T)
    sel = states[keep]
    for i in range(len(sel)):
        d = bowen_distance(space, sel[i : i + 1].repeat(len(sel), 0), sel, times)
        d[i] = np.inf
        assert d.min() > eps
    rest = np.setdiff1d(np.arange(len(states)), keep)
    for j in rest:
        d = bowen_distance(space, states[j : j + 1].repeat(len(sel), 0), sel, times)
        assert d.min() <= eps


def test_adding_points_never_decreases_sum():
    rng = np.random.default_rng(0)
    sums = rng.normal(size=50)
    for k in range(1, 50):
        assert logsumexp(sums[: k + 1]) >= logsumexp(sums[:k])


def test_cover_doubling_partition():
    cfg = PressureConfig(T_list=(8,), sample_budget=50_000, cover_cells=2, cover_overlap=0.0)
    est = pressure_cover(DoublingMap(), constant_field(0.0), cfg)
    assert abs(est.value - LOG2) < 0.05 * LOG2
    moved = pressure_cover(DoublingMap(), constant_field(0.25), cfg)
    assert abs(moved.value - est.value - 0.25) < 1e-12


def test_cover_bolza_closed_form():
    space = BolzaFlow()
    est = pressure_cover(space, a_u_field(space, Constant(0.8)), PressureConfig(T_list=(6,), cover_diameter=0.15))
    assert abs(est.value - (-0.3)) < 0.25
    assert est.params["n_selected"] <= est.params["n_words"]


def test_schedule_doubling_intercept():
    cfg = PressureConfig(epsilon_list=(2.0**-5,), T_list=(4, 6, 8, 10), sample_budget=100_000)
    est = pressure_schedule(DoublingMap(), constant_field(0.0), cfg)
    assert abs(est.value - LOG2) < 0.04
    moved = pressure_schedule(DoublingMap(), constant_field(-0.5), cfg)
    assert abs(moved.value - est.value + 0.5) < 1e-9


def test_schedule_needs_two_times():
    with pytest.raises(InvalidInputError):
        pressure_schedule(DoublingMap(), constant_field(0.0), doubling_cfg())


def test_gap_condition_examples():
    v = gap_condition(-0.3, 0.1)
    assert v.threshold == pytest.approx(-0.2) and v.satisfied
    v = gap_condition(-0.3, 0.4)
    assert v.threshold == pytest.approx(0.1) and not v.satisfied
    for eps in (1e-6, 0.1, 1.0):
        v = gap_condition(closed_form_pressure(0.5), eps)
        assert v.threshold == eps and not v.satisfied
    with pytest.raises(InvalidInputError):
        gap_condition(-0.3, 0.0)


@settings(max_examples=50, deadline=None)
@given(p=st.floats(-2, 2), q=st.floats(-2, 2), e1=st.floats(1e-3, 1), e2=st.floats(1e-3, 1))
def test_gap_condition_monotone(p, q, e1, e2):
    lo, hi = sorted((p, q))
    s1, s2 = sorted((e1, e2))
    # shrinking either the estimate or the margin can only help
    assert gap_condition(hi, s2).satisfied <= gap_condition(lo, s2).satisfied
    assert gap_condition(lo, s2).satisfied <= gap_condition(lo, s1).satisfied


def test_config_validation():
    with pytest.raises(InvalidInputError):
        PressureConfig(epsilon_list=(0.1, 0.2))
    with pytest.raises(InvalidInputError):
        PressureConfig(T_list=(4, 2))
    with pytest.raises(InvalidInputError):
        PressureConfig(delta=0.6)
    with pytest.raises(InvalidInputError):
        PressureConfig(sample_budget=10)
