import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dwlab import hyperbolic as hyp
from dwlab.dynamics import (
    BolzaFlow,
    FlatGeodesicFlow,
    HyperbolicPoint,
    NonAnosovWarning,
    TorusPoint,
    a_u_values,
    a_u_weight,
    birkhoff_average,
    birkhoff_sums,
    damping_field,
    flow,
    liouville_mean,
    min_time_average,
    sample_phase_points,
)
from dwlab.errors import InvalidInputError
from dwlab.geometry import Circle, Constant, FlatTorus, Samples, SmoothedStrip
from dwlab.hyperbolic import BolzaSurface

TWO_PI = 2 * np.pi


def sine_profile(n=256):
    geo = Circle(TWO_PI, n)
    return geo, Samples.from_function(lambda x: 0.2 * (1 + np.sin(x[:, 0])), geo)


def test_torus_straight_line_example():
    p = TorusPoint((0.5, 0.5), (1.0, 0.0), (1.0, 1.0))
    q = flow(p, 0.25)
    assert q.x == pytest.approx((0.75, 0.5), abs=1e-15)
    assert q.xi == (1.0, 0.0)


def test_unit_covector_required():
    with pytest.raises(InvalidInputError, match="unit length"):
        TorusPoint((0.0, 0.0), (1.0, 1.0), (1.0, 1.0))
    with pytest.raises(InvalidInputError, match="det 1"):
        HyperbolicPoint(2 * np.eye(2))


def test_identity_frame_round_trip():
    p = HyperbolicPoint(np.eye(2))
    back = flow(flow(p, 1.7), -1.7)
    assert hyp.frame_distance(back.g, np.eye(2)) < 1e-10


def test_unstable_expansion_ratio():
    space = BolzaFlow()
    g = hyp.sample_frames(20, np.random.default_rng(4))
    delta = 1e-6
    h = g @ hyp.unstable_matrix(delta)
    for t in (0.5, 1.0, 2.0):
        sep = hyp.frame_distance(space.advance_lifted(g, t), space.advance_lifted(h, t))
        ratio = sep / hyp.frame_distance(g, h)
        assert np.all(np.abs(ratio / np.exp(t) - 1) < 0.05)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0, 4), s=st.floats(0, 4))
def test_lifted_group_law(seed, t, s):
    space = BolzaFlow()
    g = hyp.sample_frames(4, np.random.default_rng(seed))
    one = space.advance_lifted(g, t + s)
    two = space.advance_lifted(space.advance_lifted(g, s), t)
    assert np.max(hyp.frame_distance(one, two)) <= 1e-9 * max(t + s, 1e-3)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), t=st.floats(0, 4), s=st.floats(0, 4))
def test_torus_group_law(seed, t, s):
    space = FlatGeodesicFlow(FlatTorus(1.0, 1.0, 8, 8))
    x = space.sample(8, np.random.default_rng(seed))
    one = space.advance(x, t + s)
    two = space.advance(space.advance(x, s), t)
    assert np.max(space.distance(one, two)) <= 1e-9 * max(t + s, 1e-3)


def test_reduced_flow_keeps_det_and_domain():
    space = BolzaFlow()
    g = space.sample(50, np.random.default_rng(7))
    out = space.advance(g, 50.0)
    det = out[:, 0, 0] * out[:, 1, 1] - out[:, 0, 1] * out[:, 1, 0]
    assert np.max(np.abs(det - 1)) < 1e-10
    assert np.all(hyp.in_fundamental_domain(out))


def test_birkhoff_constant_field():
    p = sample_phase_points(BolzaSurface(), 1, seed=3)[0]
    sample = birkhoff_average(-0.7, p, 10)
    assert sample.birkhoff_sum == -7.0
    assert sample.log_ju == pytest.approx(-10.0, abs=1e-6)
    assert sample.path.shape == (10, 5)


def test_birkhoff_orbit_outside_strip():
    geo = FlatTorus(1.0, 1.0, 16, 16)
    strip = SmoothedStrip(0.5, 0.3, 1.0, 0.05, axis=0)
    space = FlatGeodesicFlow(geo)
    p = TorusPoint((0.05, 0.3), (0.0, 1.0), (1.0, 1.0))
    assert birkhoff_average(damping_field(space, strip), p, 20).birkhoff_sum == 0.0


def test_birkhoff_time_reversal():
    space = FlatGeodesicFlow(FlatTorus(1.0, 1.0, 16, 16))
    strip = SmoothedStrip(0.5, 0.3, 1.0, 0.05, axis=0)
    f = damping_field(space, strip)
    start = TorusPoint((0.1, 0.2), (0.6, 0.8), (1.0, 1.0))
    T = 12
    forward = birkhoff_average(f, start, T).birkhoff_sum
    end = flow(start, T - 1)
    reversed_point = TorusPoint(end.x, tuple(-np.asarray(end.xi)), end.periods)
    backward = birkhoff_average(f, reversed_point, T).birkhoff_sum
    assert abs(forward - backward) < 1e-9


def test_a_u_examples():
    p = sample_phase_points(BolzaSurface(), 1, seed=0)[0]
    assert a_u_weight(Constant(0.8), p) == pytest.approx(-1.3, abs=1e-12)
    assert a_u_weight(Constant(0.0), p) == pytest.approx(-0.5, abs=1e-12)
    q = TorusPoint((0.2, 0.3), (1.0, 0.0), (1.0, 1.0))
    with pytest.warns(NonAnosovWarning):
        assert a_u_weight(Constant(0.3), q) == pytest.approx(-0.3, abs=1e-15)


def test_a_u_constant_spread():
    space = BolzaFlow()
    states = space.sample(1000, np.random.default_rng(11))
    vals = a_u_values(space, Constant(0.45), states)
    assert np.ptp(vals) <= 1e-9
    assert vals[0] == pytest.approx(-0.95, abs=1e-12)


def test_a_u_needs_flow_geometry():
    with pytest.raises(InvalidInputError):
        a_u_weight(Constant(0.1), "not a phase point")


def test_liouville_mean_examples():
    assert liouville_mean(Constant(0.1), Circle(TWO_PI, 64)) == 0.1
    geo, prof = sine_profile()
    assert liouville_mean(prof, geo) == pytest.approx(0.2, abs=1e-12)
    torus = FlatTorus(1.0, 1.0, 64, 64)
    strip = SmoothedStrip(0.5, 0.3, 1.0, 0.02, axis=0)
    assert liouville_mean(strip, torus) == pytest.approx(0.3, abs=0.01)


def test_min_time_average_examples():
    torus = FlatTorus(1.0, 1.0, 16, 16)
    strip = SmoothedStrip(0.5, 0.3, 1.0, 0.05, axis=0)
    stats = min_time_average(strip, torus, horizon=50, n_samples=200, seed=0)
    assert stats.c_inf < 1e-12
    const = min_time_average(Constant(0.37), torus, horizon=50, n_samples=200, seed=0)
    assert const.c_inf == 0.37 and const.liouville_mean == 0.37
    geo, prof = sine_profile()
    stats = min_time_average(prof, geo, horizon=200, n_samples=200, seed=1)
    assert stats.c_inf == pytest.approx(0.2, abs=0.01)


@settings(max_examples=8, deadline=None)
@given(
    center=st.floats(0, 1),
    width=st.floats(0.1, 0.6),
    a0=st.floats(0.1, 2),
    axis=st.integers(0, 1),
    seed=st.integers(0, 1000),
)
def test_damping_stats_ordering(center, width, a0, axis, seed):
    torus = FlatTorus(1.0, 1.0, 16, 16)
    strip = SmoothedStrip(center, width, a0, 0.05, axis=axis)
    stats = min_time_average(strip, torus, horizon=20, n_samples=100, seed=seed)
    assert 0 <= stats.c_inf <= stats.liouville_mean + 1e-12 <= stats.sup_norm + 1e-12


def test_min_time_average_validation():
    geo, prof = sine_profile(64)
    with pytest.raises(InvalidInputError):
        min_time_average(prof, geo, horizon=5)
    with pytest.raises(InvalidInputError):
        min_time_average(prof, geo, n_samples=10)


def test_sample_phase_points_contract():
    torus = FlatTorus(1.0, 1.0, 16, 16)
    with pytest.raises(InvalidInputError):
        sample_phase_points(torus, 0, seed=0)
    assert sample_phase_points(torus, 20, seed=5) == sample_phase_points(torus, 20, seed=5)
    b1 = sample_phase_points(BolzaSurface(), 5, seed=2)
    b2 = sample_phase_points(BolzaSurface(), 5, seed=2)
    assert b1 == b2
    for p in sample_phase_points(torus, 50, seed=1):
        assert abs(np.dot(p.xi, p.xi) - 1) < 1e-12


def test_monte_carlo_spatial_mean():
    torus = FlatTorus(1.0, 1.0, 32, 32)
    strip = SmoothedStrip(0.4, 0.3, 1.0, 0.05, axis=0)
    space = FlatGeodesicFlow(torus)
    states = space.sample(100_000, np.random.default_rng(9))
    vals = space.evaluate_damping(strip, states)
    sigma = vals.std() / math.sqrt(len(vals))
    assert abs(vals.mean() - liouville_mean(strip, torus)) < 3 * sigma


def test_birkhoff_sums_vectorised_matches_single():
    space = BolzaFlow()
    states = space.sample(3, np.random.default_rng(2))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        total = birkhoff_sums(space, -0.25, states, 8)
    np.testing.assert_allclose(total, -2.0, atol=1e-15)
