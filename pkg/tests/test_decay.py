import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dwlab.decay import (
    CauchyData,
    EnergySeries,
    contour_projector,
    decay_experiment,
    eigenvalue_clusters,
    energies,
    energy,
    evolve,
    fit_decay_rate,
    mode_expansion,
    window_bound_check,
)
from dwlab.errors import InvalidInputError, NumericalError
from dwlab.geometry import Circle, Constant, FlatTorus, Samples, SmoothedStrip
from dwlab.spectral import assemble_operator, constant_damping_oracle, linearize, solve_spectrum

TWO_PI = 2 * np.pi


def circle(a0, n=32):
    geo = Circle(TWO_PI, n)
    return geo, assemble_operator(geo, Constant(a0))


def smooth_data(geo, seed, modes=4):
    rng = np.random.default_rng(seed)
    x = geo.points()[:, 0]
    u0 = np.zeros(len(x), dtype=complex)
    u1 = np.zeros(len(x), dtype=complex)
    for k in range(1, modes + 1):
        u0 += rng.normal() / k**2 * np.cos(k * x + rng.uniform(0, TWO_PI))
        u1 += 1j * rng.normal() / k**2 * np.sin(k * x + rng.uniform(0, TWO_PI))
    return CauchyData(u0, u1, geo)


def bump_profile(geo):
    return Samples.from_function(lambda p: 0.1 + 0.3 * np.exp(np.cos(p[:, 0]) - 1), geo)


def mode_data(geo, k, a0):
    x = geo.points()[:, 0]
    tau, _ = constant_damping_oracle(k * k, a0)
    v = np.exp(1j * k * x)
    return tau, CauchyData(v, tau * v, geo)


def test_energy_examples():
    geo, op = circle(0.1, 64)
    n = geo.n
    assert energy(np.concatenate([np.ones(n), np.zeros(n)]), op) < 1e-12
    x = geo.points()[:, 0]
    assert energy(np.concatenate([np.exp(1j * x), np.zeros(n)]), op) == pytest.approx(math.pi, rel=1e-12)


def test_conservative_energy_constant():
    geo, op = circle(0.0, 32)
    data = smooth_data(geo, 0)
    evo = evolve(op, data, np.linspace(0, 100, 51))
    e = energies(evo.states, op)
    assert np.max(np.abs(e - e[0])) <= 1e-9 * e[0]


def test_single_mode_oracle_and_modal_agreement():
    geo, op = circle(0.1, 32)
    tau, data = mode_data(geo, 1, 0.1)
    t = np.array([0.0, 5.0, 10.0])
    ode = evolve(op, data, t).states
    modal = evolve(op, data, t, method="modal").states
    exact = np.exp(-1j * tau * t)[:, None] * data.state[None, :]
    assert np.linalg.norm(ode[-1] - modal[-1]) <= 1e-6 * np.linalg.norm(modal[-1])
    assert np.linalg.norm(ode[-1] - exact[-1]) <= 1e-6 * np.linalg.norm(exact[-1])


def test_constants_are_stationary():
    geo, op = circle(0.1, 16)
    n = geo.n
    data = CauchyData(np.ones(n), np.zeros(n), geo)
    evo = evolve(op, data, [0.0, 3.0, 30.0])
    assert np.max(np.abs(evo.states - data.state)) < 1e-12


def test_dissipation_identity():
    geo = Circle(TWO_PI, 32)
    op = assemble_operator(geo, bump_profile(geo))
    data = smooth_data(geo, 4)
    h = 0.01
    evo = evolve(op, data, [1.0 - h, 1.0, 1.0 + h])
    e = energies(evo.states, op)
    de = (e[2] - e[0]) / (2 * h)
    ut = evo.states[1, geo.n :]  # |u_t| = |i u_t|
    expected = -2 * geo.cell_volume * np.sum(op.damping * np.abs(ut) ** 2)
    assert abs(de - expected) <= 1e-3 * abs(expected)


@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 10_000), a0=st.floats(0.05, 1.0), width=st.floats(0.1, 0.5))
def test_energy_monotone_along_ode(seed, a0, width):
    geo = FlatTorus(1.0, 1.0, 8, 8)
    op = assemble_operator(geo, SmoothedStrip(0.5, width, a0, 0.05))
    rng = np.random.default_rng(seed)
    p = geo.points()
    u0 = np.cos(TWO_PI * p[:, 0] + rng.uniform(0, TWO_PI)) + 0.5 * np.sin(TWO_PI * (p[:, 0] + p[:, 1]))
    data = CauchyData(u0, 1j * rng.normal() * np.cos(TWO_PI * p[:, 1]), geo)
    e = energies(evolve(op, data, np.linspace(0, 10, 41)).states, op)
    assert np.all(np.diff(e) <= 1e-9 * e[0])


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_modal_ode_agreement_random_data(seed):
    geo = Circle(TWO_PI, 32)
    op = assemble_operator(geo, bump_profile(geo))
    spec = solve_spectrum(linearize(op), want_vectors=True)
    assert spec.condition <= 1e4
    data = smooth_data(geo, seed)
    modal = evolve(op, data, [0.0, 10.0], method="modal", spectrum=spec).states[-1]
    ode = evolve(op, data, [0.0, 10.0]).states[-1]
    assert np.linalg.norm(ode - modal) <= 1e-6 * np.linalg.norm(modal)


def test_modal_refuses_defective_spectrum():
    # a = k = 1 gives a double root tau = -i with a single eigenvector
    geo, op = circle(1.0, 8)
    data = smooth_data(geo, 0, modes=2)
    with pytest.raises(NumericalError, match="ode"):
        evolve(op, data, [0.0, 1.0], method="modal")


def test_evolve_validation():
    geo, op = circle(0.1, 16)
    data = smooth_data(geo, 0)
    with pytest.raises(InvalidInputError):
        evolve(op, data, [1.0, 0.5])
    with pytest.raises(InvalidInputError):
        evolve(op, data, [0.0, 1.0], method="euler")
    with pytest.raises(InvalidInputError):
        evolve(op, CauchyData(np.ones(4), np.zeros(4)), [0.0, 1.0])


def test_fit_synthetic_exponentials():
    t = np.linspace(0, 100, 201)
    fit = fit_decay_rate(EnergySeries(t, 5 * np.exp(-0.2 * t), "ode"))
    assert abs(fit.rate - 0.2) < 1e-6
    two = 5 * np.exp(-0.2 * t) + 3 * np.exp(-0.6 * t)
    fit = fit_decay_rate(EnergySeries(t, two, "ode"), window=(40, 100))
    assert abs(fit.rate - 0.2) < 0.01 * 0.2


def test_fit_errors():
    t = np.linspace(0, 100, 201)
    with pytest.raises(InvalidInputError, match="non-positive"):
        fit_decay_rate(EnergySeries(t, np.where(t > 50, 0.0, 1.0), "ode"), window=(0, 100))
    with pytest.raises(InvalidInputError, match="transient"):
        fit_decay_rate(EnergySeries(t, np.exp(-0.2 * t), "ode"), window=(10, 100), gap=0.1)


def test_simple_projector_is_rank_one():
    geo = Circle(TWO_PI, 16)
    b = linearize(assemble_operator(geo, bump_profile(geo)))
    proj = contour_projector(b, 0.0)
    assert proj.rank == 1 and proj.multiplicity == 1
    # trapezoid error at half-gap radius is about 2**-n_quad
    assert proj.idempotence <= 1e-9
    assert contour_projector(b, 0.0, n_quad=40).idempotence <= 1e-10


def test_kernel_projection_is_constant():
    geo = Circle(TWO_PI, 16)
    b = linearize(assemble_operator(geo, bump_profile(geo)))
    data = smooth_data(geo, 3)
    u = contour_projector(b, 0.0, data=data).projected[: geo.n]
    assert np.max(np.abs(u - u[0])) <= 1e-8 * max(1.0, np.max(np.abs(u)))


def test_projector_algebra():
    geo = Circle(TWO_PI, 12)
    b = linearize(assemble_operator(geo, bump_profile(geo)))
    spec = solve_spectrum(b)
    projs = [contour_projector(b, complex(np.mean(spec.eigenvalues[g])), spectrum=spec).projector
             for g in eigenvalue_clusters(spec.eigenvalues)]
    total = sum(projs)
    assert np.max(np.abs(total - np.eye(b.n))) <= 1e-8
    for i in range(len(projs)):
        for j in range(i + 1, min(i + 4, len(projs))):
            assert np.max(np.abs(projs[i] @ projs[j])) <= 1e-8


def test_expansion_whole_spectrum_leaves_nothing():
    geo, op = circle(0.1, 12)
    b = linearize(op)
    data = smooth_data(geo, 1)
    exp = mode_expansion(b, data, (-100, 100, -5))
    assert np.linalg.norm(exp.remainder) <= 1e-8 * np.linalg.norm(data.state)


def test_expansion_small_region_and_remainder_rate():
    geo, op = circle(0.1, 16)
    b = linearize(op)
    data = smooth_data(geo, 2)
    exp = mode_expansion(b, data, (-0.5, 0.5, -0.15))
    assert len(exp.modes) == 1 and abs(exp.modes[0].eigenvalue) < 1e-9
    t = np.linspace(0, 60, 121)
    rem = evolve(op, CauchyData.from_state(exp.remainder, geo), t).states
    slope = np.polyfit(t[40:], np.log(np.linalg.norm(rem[40:], axis=1)), 1)[0]
    assert -slope >= 0.1 * 0.9
    # the pieces evolve independently
    full = evolve(op, data, t).states
    parts = sum(evolve(op, CauchyData.from_state(m.projected, geo), t).states for m in exp.modes) + rem
    assert np.max(np.linalg.norm(full - parts, axis=1)) <= 1e-7 * np.linalg.norm(data.state)


def test_expansion_boundary_rejected():
    geo, op = circle(0.1, 16)
    with pytest.raises(InvalidInputError, match="boundary"):
        mode_expansion(linearize(op), smooth_data(geo, 0), (-1.5, 1.5, -0.1))


def test_window_bound_examples():
    geo, op = circle(0.1, 32)
    t = np.arange(0, 201) * 0.05
    n = geo.n
    const = np.tile(np.concatenate([np.ones(n), np.zeros(n)]), (len(t), 1))
    assert window_bound_check(op, t, const, 5.0) < 1e-12
    tau, data = mode_data(geo, 1, 0.1)
    states = evolve(op, data, t).states
    g = tau.imag
    T = 5.0
    e_t = 0.5 * (abs(tau) ** 2 + 1) * TWO_PI * math.exp(2 * g * T)
    integral = 2 * TWO_PI * (math.exp(2 * g * (T + 1)) - math.exp(2 * g * (T - 2))) / (2 * g)
    assert window_bound_check(op, t, states, T) == pytest.approx(e_t / integral, rel=1e-6)


def test_window_bound_resolution_stable():
    t = np.arange(0, 201) * 0.05
    ratios = []
    for n in (64, 128):
        geo = Circle(TWO_PI, n)
        op = assemble_operator(geo, bump_profile(geo))
        data = CauchyData.from_functions(geo, lambda p: np.cos(p[:, 0]) + 0.3 * np.sin(2 * p[:, 0]))
        ratios.append(window_bound_check(op, t, evolve(op, data, t).states, 5.0))
    assert abs(ratios[0] - ratios[1]) < 0.1 * ratios[1]


def test_window_bound_needs_sampling():
    geo, op = circle(0.1, 16)
    t = np.arange(0, 11) * 1.0
    states = np.zeros((len(t), 2 * geo.n))
    with pytest.raises(InvalidInputError):
        window_bound_check(op, t, states, 5.0)


def test_decay_experiment_circle():
    geo, op = circle(0.1, 32)
    rep = decay_experiment(op, smooth_data(geo, 0), horizon=150, dyn_samples=100)
    assert rep.G == pytest.approx(0.1, abs=1e-9)
    assert rep.c_inf == pytest.approx(0.1)
    assert abs(rep.fitted_rate - 0.2) <= 0.05 * 0.2
    assert rep.predicted_rate == pytest.approx(0.2, abs=1e-9)


def test_decay_experiment_torus_strip_flags():
    geo = FlatTorus(1.0, 1.0, 8, 8)
    strip = SmoothedStrip(0.5, 0.3, 1.0, 0.05)
    op = assemble_operator(geo, strip)
    p = geo.points()
    data = CauchyData(np.cos(TWO_PI * p[:, 0]) + np.cos(TWO_PI * p[:, 1]), np.zeros(geo.size), geo)
    rep = decay_experiment(op, data, horizon=20, damping=strip, dyn_horizon=20, dyn_samples=100)
    assert rep.c_inf == 0.0 and rep.predicted_rate == 0.0
    assert "c_inf_zero" in rep.flags and "resolution_dependent" in rep.flags


def test_decay_experiment_undamped():
    geo, op = circle(0.0, 16)
    rep = decay_experiment(op, smooth_data(geo, 1), horizon=30, dyn_horizon=20, dyn_samples=100)
    assert rep.G == 0 and rep.c_inf == 0 and rep.predicted_rate == 0
    assert rep.fitted_rate == pytest.approx(0.0, abs=1e-9)
