"""Geodesic flows, Birkhoff sums, the weight a^u and the dynamical damping means.

Each phase space is a small vectorised object acting on a *state array*:

* ``FlatGeodesicFlow`` (circle, flat torus): rows ``[x..., xi...]`` with
  ``|xi| = 1``; on the circle ``xi = +-1``.
* ``BolzaFlow``: stacks of ``2x2`` frames ``(n, 2, 2)`` in SL(2, R).
* ``DoublingMap``: points of ``[0, 1)``, the expanding-map test fixture.

A field on phase space is any callable mapping a state array to one value per
row.  The pressure estimators only talk to the phase space through
``advance``, ``distance``, ``embedding`` and ``sample``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from . import hyperbolic as hyp
from .errors import InvalidInputError
from .geometry import Circle, Constant, FlatTorus
from .hyperbolic import BolzaSurface

SIMPSON_SUBSTEPS = 16
BOWEN_STEP = 0.1
RENORMALIZE_EVERY = 8


class NonAnosovWarning(UserWarning):
    """The flow is not hyperbolic; the unstable-Jacobian term is set to zero."""


# ---------------------------------------------------------------------------
# phase points


@dataclass(frozen=True)
class TorusPoint:
    """Unit covector ``xi`` at ``x`` on a flat circle or torus with the given periods."""

    x: tuple
    xi: tuple
    periods: tuple

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        periods = np.atleast_1d(np.asarray(self.periods, dtype=float))
        if not (x.shape == xi.shape == periods.shape):
            raise InvalidInputError("x, xi and periods must have the same dimension")
        if abs(float(xi @ xi) - 1) > 1e-12:
            raise InvalidInputError(f"covector must have unit length, |xi|^2 = {float(xi @ xi)!r}")
        object.__setattr__(self, "x", tuple(np.mod(x, periods).tolist()))
        object.__setattr__(self, "xi", tuple(xi.tolist()))
        object.__setattr__(self, "periods", tuple(periods.tolist()))

    def state(self) -> np.ndarray:
        return np.concatenate([self.x, self.xi])[None, :]


@dataclass(frozen=True)
class HyperbolicPoint:
    """Unit tangent frame of the Bolza surface as a matrix of SL(2, R)."""

    g: np.ndarray = field(compare=False)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.shape != (2, 2):
            raise InvalidInputError(f"frame must be 2x2, got shape {g.shape}")
        det = np.linalg.det(g)
        if abs(det - 1) > 1e-10:
            raise InvalidInputError(f"frame must have det 1 within 1e-10, got {det!r}")
        object.__setattr__(self, "g", g)

    def state(self) -> np.ndarray:
        return self.g[None]

    def __eq__(self, other):
        return isinstance(other, HyperbolicPoint) and np.array_equal(self.g, other.g)

    def __hash__(self):
        return hash(self.g.tobytes())


PhasePoint = Union[TorusPoint, HyperbolicPoint]


# ---------------------------------------------------------------------------
# phase spaces


def _wrap(d, period):
    return d - period * np.round(d / period)


class FlatGeodesicFlow:
    """Straight-line flow on ``S*M`` for a circle or flat torus."""

    continuous = True
    anosov = False

    def __init__(self, geometry):
        if not isinstance(geometry, (Circle, FlatTorus)):
            raise InvalidInputError(f"flat flow needs a Circle or FlatTorus, got {type(geometry).__name__}")
        self.geometry = geometry
        self.dim = geometry.dim
        self.periods = np.asarray(geometry.periods, dtype=float)

    def sample(self, n, rng):
        x = rng.random((n, self.dim)) * self.periods
        if self.dim == 1:
            xi = np.where(rng.random((n, 1)) < 0.5, -1.0, 1.0)
        else:
            theta = rng.random(n) * 2 * np.pi
            xi = np.column_stack([np.cos(theta), np.sin(theta)])
        return np.hstack([x, xi])

    def advance(self, states, t):
        x = states[:, : self.dim]
        xi = states[:, self.dim :]
        return np.hstack([np.mod(x + t * xi, self.periods), xi])

    def positions(self, states):
        return states[:, : self.dim]

    def distance(self, s1, s2):
        dx = _wrap(s1[..., : self.dim] - s2[..., : self.dim], self.periods)
        dxi = s1[..., self.dim :] - s2[..., self.dim :]
        return np.sqrt(np.sum(dx**2, axis=-1) + np.sum(dxi**2, axis=-1))

    def embedding(self, states, times):
        """Coordinates whose periodic sup-distance never exceeds the Bowen distance."""
        cols = [np.mod(states[:, : self.dim] + t * states[:, self.dim :], self.periods) for t in times]
        cols.append(states[:, self.dim :] + 1.0)
        box = np.concatenate([np.tile(self.periods, len(times)), np.full(self.dim, 4.0)])
        return np.hstack(cols), box

    def evaluate_damping(self, damping, states):
        return damping.evaluate(self.positions(states), self.geometry)

    def log_unstable_jacobian(self, states, t):
        return np.zeros(len(states))

    def path_row(self, state):
        return np.asarray(state, dtype=float)

    def to_point(self, state):
        return TorusPoint(tuple(state[: self.dim]), tuple(state[self.dim :]), tuple(self.periods))

    def witness_states(self):
        """Axis-parallel closed geodesics through every grid offset (both orientations)."""
        if self.dim == 1:
            return np.empty((0, 2))
        g = self.geometry
        out = []
        for axis, n in enumerate(g.shape):
            other = 1 - axis
            nt = g.shape[other]
            offsets = (np.arange(2 * nt) + 0.5) * g.periods[other] / (2 * nt)
            offsets = np.concatenate([offsets, np.arange(nt) * g.periods[other] / nt])
            for sign in (1.0, -1.0):
                s = np.zeros((len(offsets), 4))
                s[:, other] = offsets
                s[:, 2 + axis] = sign
                out.append(s)
        return np.vstack(out)


class BolzaFlow:
    """Geodesic flow on the unit tangent bundle of the Bolza surface.

    ``advance`` reduces to the fundamental octagon after every unit of time;
    ``advance_lifted`` keeps the lift, which is what the Bowen metric needs for
    points closer than the injectivity radius.
    """

    continuous = True
    anosov = True
    geometry = BolzaSurface()

    def sample(self, n, rng):
        return hyp.sample_frames(n, rng)

    def advance(self, states, t):
        g = np.array(states, dtype=float)
        steps = max(1, int(math.ceil(abs(t))))
        a = hyp.geodesic_matrix(t / steps)
        for k in range(steps):
            g = g @ a
            if (k + 1) % RENORMALIZE_EVERY == 0:
                g = hyp.renormalize(g)
            g = hyp.reduce_fundamental_domain(g)
        return hyp.renormalize(g)

    def advance_lifted(self, states, t):
        return np.asarray(states) @ hyp.geodesic_matrix(t)

    def distance(self, s1, s2):
        return hyp.frame_distance(s1, s2)

    def evaluate_damping(self, damping, states):
        if isinstance(damping, Constant):
            return np.full(len(states), float(damping.a0))
        coords = hyp.frame_coordinates(hyp.reduce_fundamental_domain(states))[:, :2]
        return damping.evaluate(coords, self.geometry)

    def log_unstable_jacobian(self, states, t, delta=1e-7):
        """``log det dPhi^{-t}`` on the unstable line, by finite differences of the flow."""
        g = np.asarray(states)
        end = self.advance_lifted(g, t)
        nudged = end @ hyp.unstable_matrix(delta)
        back0 = self.advance_lifted(end, -t)
        back1 = self.advance_lifted(nudged, -t)
        return np.log(self.distance(back0, back1) / self.distance(end, nudged))

    def path_row(self, state):
        x, y, theta = hyp.frame_coordinates(state)
        return np.array([x, y, np.cos(theta), np.sin(theta)])

    def to_point(self, state):
        return HyperbolicPoint(np.array(state))


class DoublingMap:
    """``x -> 2x mod 1`` on the circle ``[0, 1)``: an exact pressure test fixture."""

    continuous = False
    anosov = True
    period = 1.0

    def sample(self, n, rng):
        return rng.random(n)

    def advance(self, states, t):
        k = int(t)
        if k != t or k < 0:
            raise InvalidInputError(f"the doubling map only has non-negative integer iterates, got {t}")
        return np.mod(np.asarray(states) * 2.0**k, 1.0)

    def distance(self, s1, s2):
        return np.abs(_wrap(np.asarray(s1) - np.asarray(s2), 1.0))

    def embedding(self, states, times):
        cols = np.column_stack([self.advance(states, int(t)) for t in times])
        return cols, np.ones(len(times))


def phase_space(geometry):
    """Vectorised flow object for a geometry (or a phase space passed through)."""
    if isinstance(geometry, (FlatGeodesicFlow, BolzaFlow, DoublingMap)):
        return geometry
    if isinstance(geometry, (Circle, FlatTorus)):
        return FlatGeodesicFlow(geometry)
    if isinstance(geometry, BolzaSurface):
        return BolzaFlow()
    raise InvalidInputError(f"no geodesic flow for geometry {type(geometry).__name__}")


def _space_of(p):
    if isinstance(p, HyperbolicPoint):
        return BolzaFlow()
    if not isinstance(p, TorusPoint):
        raise InvalidInputError(f"unsupported phase point {type(p).__name__}; expected TorusPoint or HyperbolicPoint")
    periods = p.periods
    geom = Circle(length=periods[0]) if len(periods) == 1 else FlatTorus(lx=periods[0], ly=periods[1])
    return FlatGeodesicFlow(geom)


# ---------------------------------------------------------------------------
# single-point operations


def flow(p: PhasePoint, t: float) -> PhasePoint:
    space = _space_of(p)
    return space.to_point(space.advance(p.state(), t)[0])


def reduce_fundamental_domain(g):
    return hyp.reduce_fundamental_domain(g)


def constant_field(c: float) -> Callable:
    return lambda states: np.full(len(states), float(c))


def damping_field(space, damping) -> Callable:
    return lambda states: space.evaluate_damping(damping, states)


def _as_field(f):
    return constant_field(f) if np.isscalar(f) else f


def birkhoff_sums(space, f, states, T: int) -> np.ndarray:
    """``sum_{k=0}^{T-1} f(Phi^k rho)`` for every row of ``states``."""
    f = _as_field(f)
    total = np.zeros(len(states))
    current = states
    for k in range(T):
        total = total + f(current)
        if k < T - 1:
            current = space.advance(current, 1)
    return total


@dataclass(frozen=True)
class TrajectorySample:
    start: PhasePoint
    T: int
    birkhoff_sum: float
    log_ju: float
    weight_au: float
    path: np.ndarray = field(repr=False, compare=False)


def birkhoff_average(f, p: PhasePoint, T: int, damping=None) -> TrajectorySample:
    """Birkhoff sum of ``f`` along unit-time samples of the orbit of ``p``.

    The sum is accumulated with ``math.fsum``, so ``f == c`` gives exactly
    ``T * c``.  With ``damping`` given, ``weight_au`` is the Birkhoff sum of
    ``a^u`` along the same orbit.
    """
    if int(T) != T or T < 1:
        raise InvalidInputError(f"T must be a positive integer, got {T}")
    T = int(T)
    f = _as_field(f)
    space = _space_of(p)
    states = [p.state()]
    for _ in range(T - 1):
        states.append(space.advance(states[-1], 1))
    stack = np.concatenate(states)
    total = math.fsum(f(stack).tolist())
    log_ju = float(space.log_unstable_jacobian(p.state(), T)[0])
    weight = math.nan
    if damping is not None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonAnosovWarning)
            weight = math.fsum(a_u_values(space, damping, stack).tolist())
    path = np.array([np.concatenate([[k], space.path_row(s)]) for k, s in enumerate(stack)])
    return TrajectorySample(p, T, total, log_ju, weight, path)


# ---------------------------------------------------------------------------
# a^u


def _simpson_weights(n: int, length: float = 1.0) -> np.ndarray:
    if n % 2:
        raise InvalidInputError("Simpson's rule needs an even number of substeps")
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return w * (length / n) / 3


def _weighted_mean(values, weights):
    """``sum(w v) / sum(w)`` computed around the first value (exact for constants)."""
    ref = values[..., :1]
    return ref[..., 0] + np.sum((values - ref) * weights, axis=-1) / np.sum(weights)


def unit_damping_integral(space, damping, states) -> np.ndarray:
    """``int_0^1 a(Phi^s rho) ds`` by composite Simpson with 16 substeps."""
    if isinstance(damping, Constant):
        return np.full(len(states), float(damping.a0))
    weights = _simpson_weights(SIMPSON_SUBSTEPS)
    vals = np.column_stack(
        [space.evaluate_damping(damping, space.advance(states, j / SIMPSON_SUBSTEPS) if j else states)
         for j in range(SIMPSON_SUBSTEPS + 1)]
    )
    return _weighted_mean(vals, weights)


def _half_log_ju(space):
    if isinstance(space, BolzaFlow):
        # curvature -1: det dPhi^{-1} on the unstable line is e^{-1}
        return -0.5
    if isinstance(space, FlatGeodesicFlow):
        warnings.warn(
            "flat geodesic flow is not Anosov; the unstable-Jacobian term of a^u is set to 0",
            NonAnosovWarning,
            stacklevel=3,
        )
        return 0.0
    raise InvalidInputError(f"no unstable Jacobian available for {type(space).__name__}")


def a_u_values(space, damping, states) -> np.ndarray:
    """``a^u = -int_0^1 a o Phi^s ds + 1/2 log J^u`` for each row of ``states``."""
    half = _half_log_ju(space)
    return -unit_damping_integral(space, damping, states) + half


def a_u_weight(damping, p: PhasePoint) -> float:
    space = _space_of(p)
    return float(a_u_values(space, damping, p.state())[0])


def a_u_field(space, damping) -> Callable:
    half = _half_log_ju(space)
    return lambda states: half - unit_damping_integral(space, damping, states)


# ---------------------------------------------------------------------------
# damping means


@dataclass(frozen=True)
class DampingStats:
    liouville_mean: float
    c_inf: float
    sup_norm: float
    horizon: float
    n_samples: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "liouville_mean": self.liouville_mean,
            "c_inf": self.c_inf,
            "sup_norm": self.sup_norm,
            "horizon": self.horizon,
            "n_samples": self.n_samples,
            "seed": self.seed,
        }


LIOUVILLE_MC_SAMPLES = 200_000


def liouville_mean(damping, geometry) -> float:
    """Spatial mean of ``a``; equals the Liouville mean of ``a o pi`` on ``S*M``.

    Grid geometries use the trapezoid (equivalently spectral) quadrature at
    the grid nodes.  On the Bolza surface a non-constant profile is averaged
    by a fixed-seed Monte Carlo over Liouville samples.
    """
    if isinstance(damping, Constant):
        return float(damping.a0)
    if isinstance(geometry, BolzaSurface):
        space = BolzaFlow()
        states = space.sample(LIOUVILLE_MC_SAMPLES, np.random.default_rng(0))
        vals = space.evaluate_damping(damping, states)
        return float(_weighted_mean(vals[None, :], np.ones(len(vals)))[0])
    from .geometry import sample_damping

    vals = sample_damping(damping, geometry)
    return float(_weighted_mean(vals[None, :], np.ones(vals.size))[0])


def time_averages(space, damping, states, horizon: float, step: float = 0.05) -> np.ndarray:
    """``(1/t) int_0^t a o Phi^s ds`` at ``t = horizon`` by composite Simpson."""
    n = int(math.ceil(horizon / step))
    n += n % 2
    weights = _simpson_weights(n, horizon)
    if isinstance(space, FlatGeodesicFlow):
        times = np.linspace(0.0, horizon, n + 1)
        d = space.dim
        x = states[:, None, :d] + times[None, :, None] * states[:, None, d:]
        x = np.mod(x, space.periods)
        vals = damping.evaluate(x, space.geometry)
    else:
        h = horizon / n
        cols = [space.evaluate_damping(damping, states)]
        current = states
        for _ in range(n):
            current = space.advance(current, h)
            cols.append(space.evaluate_damping(damping, current))
        vals = np.column_stack(cols)
    return _weighted_mean(vals, weights)


def min_time_average(damping, geometry, horizon: float = 200.0, n_samples: int = 1000, seed: int = 0) -> DampingStats:
    """Upper estimate of ``C(inf)``: the smallest sampled finite-time average.

    On the flat torus the axis-parallel closed geodesics through the grid are
    added to the random sample, since these are the orbits that can avoid a
    strip-shaped damping forever.
    """
    if horizon < 10:
        raise InvalidInputError(f"horizon must be >= 10, got {horizon}")
    if n_samples < 100:
        raise InvalidInputError(f"n_samples must be >= 100, got {n_samples}")
    space = phase_space(geometry)
    sup = float(damping.sup_norm)
    mean = liouville_mean(damping, geometry)
    if isinstance(damping, Constant):
        return DampingStats(mean, float(damping.a0), sup, float(horizon), int(n_samples), int(seed))
    states = space.sample(n_samples, np.random.default_rng(seed))
    if isinstance(space, FlatGeodesicFlow):
        states = np.vstack([states, space.witness_states()])
    averages = time_averages(space, damping, states, horizon)
    c_inf = max(float(np.min(averages)), 0.0)
    return DampingStats(mean, c_inf, sup, float(horizon), int(n_samples), int(seed))


def sample_phase_points(geometry, n: int, seed: int) -> list:
    """Liouville-uniform phase points, deterministic in ``seed``."""
    if int(n) != n or n < 1:
        raise InvalidInputError(f"n must be a positive integer, got {n}")
    space = phase_space(geometry)
    states = space.sample(int(n), np.random.default_rng(seed))
    return [space.to_point(s) for s in states]
