"""Time evolution of the damped wave equation, energies, decay rates and spectral projectors.

States are vectors ``U = (u, i u_t)`` of length ``2N`` evolving by
``U(t) = exp(-i t B) U(0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.integrate import simpson
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidInputError, NumericalError, SingularError
from .geometry import Circle, FlatTorus, MatrixInput, Samples
from .spectral import NEAR_DEFECTIVE, CompanionOperator, DiscreteOperator, linearize, solve_spectrum, spectral_gap

CFL = 0.2
GAUSS_STAGES = 3
ENERGY_TOL = 1e-9
CLUSTER_RTOL = 1e-6
BOUNDARY_MIN_DIST = 1e-6


@dataclass(frozen=True, eq=False)
class CauchyData:
    """Initial data ``omega0 = u(0)`` and ``omega1 = i u_t(0)`` on the grid."""

    omega0: np.ndarray
    omega1: np.ndarray
    geometry: object = None

    def __post_init__(self):
        w0 = np.asarray(self.omega0, dtype=complex).ravel()
        w1 = np.asarray(self.omega1, dtype=complex).ravel()
        if w0.shape != w1.shape:
            raise InvalidInputError(f"omega0 and omega1 differ in length: {w0.size} vs {w1.size}")
        if not (np.all(np.isfinite(w0)) and np.all(np.isfinite(w1))):
            raise InvalidInputError("Cauchy data must be finite")
        object.__setattr__(self, "omega0", w0)
        object.__setattr__(self, "omega1", w1)

    @classmethod
    def from_state(cls, state, geometry=None) -> "CauchyData":
        state = np.asarray(state)
        n = state.size // 2
        return cls(state[:n], state[n:], geometry)

    @classmethod
    def from_functions(cls, geometry, u0, ut0=None) -> "CauchyData":
        """Sample ``u(0)`` and ``u_t(0)`` (functions of the grid points) on ``geometry``."""
        pts = geometry.points()
        w0 = np.asarray(u0(pts), dtype=complex)
        w1 = np.zeros_like(w0) if ut0 is None else 1j * np.asarray(ut0(pts), dtype=complex)
        return cls(w0, w1, geometry)

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.omega0, self.omega1])


@dataclass(frozen=True, eq=False)
class Evolution:
    times: np.ndarray
    states: np.ndarray
    method: str


@dataclass(frozen=True, eq=False)
class EnergySeries:
    times: np.ndarray
    energies: np.ndarray
    method: str


@dataclass(frozen=True, eq=False)
class DecayFit:
    rate: float
    residual: float
    window: tuple
    n_points: int
    intercept: float = math.nan


@dataclass(frozen=True, eq=False)
class ModeProjection:
    eigenvalue: complex
    multiplicity: int
    rank: int
    projector: np.ndarray = field(repr=False)
    projected: np.ndarray | None = field(default=None, repr=False)
    radius: float = math.nan
    idempotence: float = math.nan


@dataclass(frozen=True, eq=False)
class ModeExpansion:
    modes: list
    remainder: np.ndarray
    region: tuple


@dataclass(frozen=True, eq=False)
class DecayReport:
    G: float
    c_inf: float
    a_bar: float
    fitted_rate: float
    predicted_rate: float
    window: tuple
    residual: float
    kappa: float
    predicted_rate_pressure: float | None = None
    flags: tuple = ()
    series: EnergySeries | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {
            "G": self.G,
            "c_inf": self.c_inf,
            "a_bar": self.a_bar,
            "fitted_rate": self.fitted_rate,
            "predicted_rate": self.predicted_rate,
            "window": list(self.window),
            "residual": self.residual,
            "kappa": self.kappa,
            "flags": list(self.flags),
        }
        if self.predicted_rate_pressure is not None:
            out["predicted_rate_pressure"] = self.predicted_rate_pressure
        return out


# ---------------------------------------------------------------------------
# norms and energy


def _cell_volume(op: DiscreteOperator) -> float:
    geom = op.geometry
    if geom is None:
        return 1.0 / op.n
    return geom.cell_volume


def energy(state, op: DiscreteOperator) -> float:
    """``E = 1/2 (|u_t|^2 + <-Lap u, u>)`` with the grid (spectral) inner product."""
    state = np.asarray(state)
    n = op.n
    u0, u1 = state[:n], state[n:]
    grad = max(float(np.real(np.vdot(u0, -op.laplacian @ u0))), 0.0)
    return float(0.5 * _cell_volume(op) * (np.real(np.vdot(u1, u1)) + grad))


def energies(states, op: DiscreteOperator) -> np.ndarray:
    states = np.atleast_2d(states)
    n = op.n
    u0, u1 = states[:, :n], states[:, n:]
    grad = np.maximum(np.real(np.einsum("ti,ti->t", u0.conj(), u0 @ (-op.laplacian).T)), 0.0)
    kin = np.real(np.einsum("ti,ti->t", u1.conj(), u1))
    return 0.5 * _cell_volume(op) * (kin + grad)


def sobolev_norm(v, geometry, s: float) -> float:
    """``H^s`` norm through the Fourier multiplier ``(1 + |k|^2)^{s/2}``."""
    v = np.asarray(v, dtype=complex)
    if isinstance(geometry, (Circle, FlatTorus)):
        coeffs = np.fft.fftn(v.reshape(geometry.shape))
        k2 = np.sum(geometry.wavenumbers() ** 2, axis=1).reshape(geometry.shape)
        total = np.sum((1 + k2) ** s * np.abs(coeffs) ** 2) * geometry.cell_volume / v.size
        return float(np.sqrt(total))
    if isinstance(geometry, MatrixInput):
        lam, vecs = np.linalg.eigh(-geometry.laplacian)
        c = vecs.T @ v
        total = np.sum((1 + np.maximum(lam, 0)) ** s * np.abs(c) ** 2) * geometry.cell_volume
        return float(np.sqrt(total))
    raise InvalidInputError(f"no Sobolev norm for geometry {type(geometry).__name__}")


def data_norm(data: CauchyData, geometry, kappa: float) -> float:
    """Norm of ``(omega0, omega1)`` in ``H^{1+kappa} x H^kappa``."""
    return math.hypot(sobolev_norm(data.omega0, geometry, 1 + kappa), sobolev_norm(data.omega1, geometry, kappa))


def h1_squared(states, op: DiscreteOperator) -> np.ndarray:
    states = np.atleast_2d(states)
    u0 = states[:, : op.n]
    grad = np.real(np.einsum("ti,ti->t", u0.conj(), u0 @ (-op.laplacian).T))
    mass = np.real(np.einsum("ti,ti->t", u0.conj(), u0))
    return _cell_volume(op) * (mass + grad)


# ---------------------------------------------------------------------------
# evolution


def stable_step(op: DiscreteOperator) -> float:
    """``0.2 * h / c`` with unit wave speed; ``h`` from the grid or the Laplacian's spectral radius."""
    geom = op.geometry
    if isinstance(geom, (Circle, FlatTorus)):
        h = min(p / n for p, n in zip(geom.periods, geom.shape))
    else:
        radius = float(np.max(np.abs(np.linalg.eigvalsh(op.laplacian))))
        h = math.pi / math.sqrt(max(radius, 1e-300))
    return CFL * h


def _check_grid(t_grid):
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise InvalidInputError("t_grid must be a non-empty 1-D array")
    if np.any(np.diff(t) <= 0) or t[0] < 0:
        raise InvalidInputError("t_grid must be non-negative and strictly ascending")
    return t


def evolve(op: DiscreteOperator, data: CauchyData, t_grid, method: str = "ode", spectrum=None) -> Evolution:
    """Snapshots of ``exp(-i t B) U(0)`` at the times of ``t_grid``.

    ``modal`` expands the data in eigenvectors.  ``ode`` runs the 3-stage
    Gauss-Legendre scheme (the sixth-order member of the implicit-midpoint
    family) with step at most ``0.2 h``; it preserves the energy exactly when
    ``a = 0``, and any snapshot whose energy grew is rejected.
    """
    t = _check_grid(t_grid)
    u = data.state
    if u.size != 2 * op.n:
        raise InvalidInputError(f"data has length {u.size}, the operator needs {2 * op.n}")
    b = linearize(op).matrix
    if method == "modal":
        states = _evolve_modal(b, u, t, op, spectrum)
    elif method == "ode":
        states = _evolve_midpoint(b, u, t, op)
    else:
        raise InvalidInputError(f"unknown evolution method {method!r} (use 'modal' or 'ode')")
    return Evolution(t, states, method)


def _evolve_modal(b, u, t, op, spectrum):
    if spectrum is None or spectrum.vectors is None:
        spectrum = solve_spectrum(CompanionOperator(b, op), want_vectors=True)
    if not spectrum.condition <= NEAR_DEFECTIVE:
        raise NumericalError(
            f"eigenvector matrix is near-defective (condition {spectrum.condition:.3e} > {NEAR_DEFECTIVE:.0e}); "
            "use method='ode'"
        )
    vecs = spectrum.vectors
    coeff = np.linalg.solve(vecs, u)
    phases = np.exp(-1j * np.outer(t, spectrum.eigenvalues))
    return (phases * coeff) @ vecs.T


def _gauss_roots(stages: int) -> np.ndarray:
    """Roots of the numerator of the ``(s, s)`` diagonal Pade approximant of ``exp``.

    The ``s``-stage Gauss-Legendre method applied to a linear system has this
    approximant as its stability function; ``s = 1`` is the implicit midpoint
    rule.
    """
    coeffs = [
        math.factorial(2 * stages - j) * math.factorial(stages)
        / (math.factorial(2 * stages) * math.factorial(j) * math.factorial(stages - j))
        for j in range(stages + 1)
    ]
    return np.roots(coeffs[::-1])


def _evolve_midpoint(b, u, t, op, stages=GAUSS_STAGES):
    """Gauss-Legendre collocation: ``U <- Q(-A)^{-1} Q(A) U`` with ``A = -i dt B``."""
    dt_max = stable_step(op)
    eye = np.eye(b.shape[0])
    roots = _gauss_roots(stages)
    out = np.empty((len(t), b.shape[0]), dtype=complex)
    factors = {}
    current = u.astype(complex)
    e_prev = energy(current, op)
    # rounding floor of the energy evaluation itself
    scale = float(np.max(np.abs(op.laplacian))) * op.n + 1.0
    slack = ENERGY_TOL * e_prev + 100 * np.finfo(float).eps * scale * _cell_volume(op) * float(np.vdot(current, current).real)
    clock = 0.0
    for j, target in enumerate(t):
        span = target - clock
        if span > 0:
            m = int(math.ceil(span / dt_max - 1e-12))
            dt = span / m
            key = round(dt, 15)
            if key not in factors:
                a = -1j * dt * b
                # Q(z) = prod (1 - z / r); numerator factors and LU of the denominator factors
                numer = [eye - a / r for r in roots]
                denom = [sla.lu_factor(eye + a / r) for r in roots]
                factors[key] = (numer, denom)
            numer, denom = factors[key]
            for _ in range(m):
                for mat in numer:
                    current = mat @ current
                for lu in denom:
                    current = sla.lu_solve(lu, current)
            clock = target
            e_now = energy(current, op)
            if e_now > e_prev + slack:
                raise NumericalError(f"energy increased from {e_prev!r} to {e_now!r} at t={target}; step rejected")
            e_prev = e_now
        out[j] = current
    return out


def energy_series(evolution: Evolution, op: DiscreteOperator) -> EnergySeries:
    return EnergySeries(evolution.times, energies(evolution.states, op), evolution.method)


# ---------------------------------------------------------------------------
# decay-rate fitting


def fit_decay_rate(series: EnergySeries, window=None, gap: float | None = None, sup_damping: float | None = None) -> DecayFit:
    """Least-squares slope of ``log E`` over ``window``; the rate is ``-slope``.

    With ``gap`` (or, failing that, ``sup_damping``) given, the window must
    start at ``t >= 5 / gap`` so that transients are excluded; by default it
    starts there and runs to the end of the series.  Slightly negative rates
    from round-off in conservative runs are reported as 0.
    """
    times = np.asarray(series.times, dtype=float)
    values = np.asarray(series.energies, dtype=float)
    scale = gap if gap else sup_damping
    t_min = 5.0 / scale if scale and scale > 0 else float(times[0])
    if window is None:
        window = (t_min, float(times[-1]))
    lo, hi = float(window[0]), float(window[1])
    if scale and lo < t_min - 1e-12:
        raise InvalidInputError(f"fit window starts at {lo}, inside the transient t < 5/G = {t_min}")
    mask = (times >= lo - 1e-12) & (times <= hi + 1e-12)
    if np.count_nonzero(mask) < 10:
        raise InvalidInputError(f"fit window [{lo}, {hi}] holds {np.count_nonzero(mask)} points, need >= 10")
    e = values[mask]
    if np.any(e <= 0):
        raise InvalidInputError("non-positive energies in the fit window")
    x = times[mask]
    slope, intercept = np.polyfit(x, np.log(e), 1)
    resid = np.log(e) - (intercept + slope * x)
    rate = max(-float(slope), 0.0)
    return DecayFit(rate, float(np.sqrt(np.mean(resid**2))), (lo, hi), int(mask.sum()), float(intercept))


# ---------------------------------------------------------------------------
# spectral projectors


def eigenvalue_clusters(tau) -> list:
    """Single-linkage clusters with threshold ``1e-6 (1 + |tau|)``, as index arrays."""
    tau = np.asarray(tau)
    n = len(tau)
    diff = np.abs(tau[:, None] - tau[None, :])
    thresh = CLUSTER_RTOL * (1 + np.minimum(np.abs(tau)[:, None], np.abs(tau)[None, :]))
    adj = csr_matrix(diff <= thresh)
    _, labels = connected_components(adj, directed=False)
    groups = [np.flatnonzero(labels == lab) for lab in range(labels.max() + 1)] if n else []
    return sorted(groups, key=lambda g: (-tau[g].imag.mean(), tau[g].real.mean()))


def _eigenvalues_of(b, spectrum):
    if spectrum is not None:
        return np.asarray(spectrum.eigenvalues)
    return np.asarray(sla.eigvals(b.matrix))


def contour_projector(
    b: CompanionOperator, center: complex, radius: float | None = None, n_quad: int = 32, spectrum=None, data=None
) -> ModeProjection:
    """Riesz projector ``(1/2 pi i) \\oint (tau - B)^{-1} d tau`` on a circle, by the trapezoid rule.

    Without ``radius`` the circle has half the distance from ``center`` to the
    nearest eigenvalue outside its cluster.
    """
    tau = _eigenvalues_of(b, spectrum)
    clusters = eigenvalue_clusters(tau)
    dist = np.abs(tau - center)
    nearest = int(np.argmin(dist)) if len(tau) else -1
    home = next((g for g in clusters if nearest in g), None)
    if home is not None and np.min(dist[home]) > CLUSTER_RTOL * (1 + abs(center)) * 10:
        home = None
    if radius is None:
        if home is None:
            raise InvalidInputError(f"no eigenvalue near the centre {center}")
        others = np.setdiff1d(np.arange(len(tau)), home)
        spread = float(np.max(np.abs(tau[home] - center)))
        radius = 0.5 * float(np.min(np.abs(tau[others] - center))) if others.size else 1.0
        radius = max(radius, 2 * spread)
    inside = np.flatnonzero(dist < radius)
    near = np.flatnonzero((dist >= radius) & (dist < 2 * radius))
    if near.size:
        raise InvalidInputError(
            f"eigenvalue {tau[near[0]]} lies within twice the contour radius {radius} of {center}"
        )
    multiplicity = int(inside.size)
    size = b.n
    eye = np.eye(size)
    proj = np.zeros((size, size), dtype=complex)
    for j in range(n_quad):
        w = radius * np.exp(2j * np.pi * j / n_quad)
        lu = sla.lu_factor(eye * (center + w) - b.matrix, check_finite=False)
        if np.min(np.abs(np.diag(lu[0]))) == 0:
            raise SingularError(f"quadrature node {center + w} is an eigenvalue")
        proj += w * sla.lu_solve(lu, eye)
    proj /= n_quad
    rank = int(round(float(np.real(np.trace(proj)))))
    if rank != multiplicity:
        raise NumericalError(
            f"projector rank {rank} differs from the enclosed cluster size {multiplicity}: enclosure violated"
        )
    idem = float(np.linalg.norm(proj @ proj - proj, 2) / max(1.0, np.linalg.norm(proj, 2)))
    center_value = complex(np.mean(tau[inside])) if inside.size else complex(center)
    projected = proj @ data.state if data is not None else None
    return ModeProjection(center_value, multiplicity, rank, proj, projected, float(radius), idem)


def _rect_distance(tau, region):
    re_lo, re_hi, im_lo, im_hi = region
    d = [np.abs(tau.real - re_lo), np.abs(tau.real - re_hi), np.abs(tau.imag - im_lo)]
    if np.isfinite(im_hi):
        d.append(np.abs(tau.imag - im_hi))
    # distance to the boundary segments (only meaningful where the projection hits the side)
    in_im = (tau.imag >= im_lo) & (tau.imag <= im_hi)
    in_re = (tau.real >= re_lo) & (tau.real <= re_hi)
    side = np.minimum(np.where(in_im, d[0], np.inf), np.where(in_im, d[1], np.inf))
    side = np.minimum(side, np.where(in_re, d[2], np.inf))
    if np.isfinite(im_hi):
        side = np.minimum(side, np.where(in_re, d[3], np.inf))
    corners = [complex(r, i) for r in (re_lo, re_hi) for i in (im_lo, im_hi) if np.isfinite(i)]
    for c in corners:
        side = np.minimum(side, np.abs(tau - c))
    return side


def mode_expansion(b: CompanionOperator, data: CauchyData, region, spectrum=None, n_quad: int = 32) -> ModeExpansion:
    """Projectors for every eigenvalue cluster inside ``region`` and the remainder.

    ``region = (re_lo, re_hi, im_lo, im_hi)``; ``im_hi`` may be ``inf``.
    """
    if len(region) == 3:
        region = (*region, math.inf)
    re_lo, re_hi, im_lo, im_hi = (float(v) for v in region)
    if not (re_lo < re_hi and im_lo < im_hi):
        raise InvalidInputError(f"degenerate region {region}")
    tau = _eigenvalues_of(b, spectrum)
    gap = _rect_distance(tau, (re_lo, re_hi, im_lo, im_hi))
    if np.any(gap < BOUNDARY_MIN_DIST):
        bad = tau[np.argmin(gap)]
        raise InvalidInputError(f"eigenvalue {bad} lies on the boundary of the region; nudge the region")
    inside = (tau.real > re_lo) & (tau.real < re_hi) & (tau.imag > im_lo) & (tau.imag < im_hi)
    modes = []
    total = np.zeros(b.n, dtype=complex)
    for group in eigenvalue_clusters(tau):
        if not inside[group[0]]:
            continue
        mode = contour_projector(b, complex(np.mean(tau[group])), None, n_quad, spectrum=spectrum, data=data)
        modes.append(mode)
        total += mode.projected
    return ModeExpansion(modes, data.state - total, (re_lo, re_hi, im_lo, im_hi))


# ---------------------------------------------------------------------------
# diagnostics


def window_bound_check(op: DiscreteOperator, times, states, T: float) -> float:
    """``E(u, T) / int_{T-2}^{T+1} |u|_{H^1}^2 dt`` with composite Simpson quadrature."""
    times = np.asarray(times, dtype=float)
    if T < 2:
        raise InvalidInputError(f"T must be >= 2, got {T}")
    mask = (times >= T - 2 - 1e-12) & (times <= T + 1 + 1e-12)
    sel = times[mask]
    if sel.size < 2 or sel[0] > T - 2 + 1e-9 or sel[-1] < T + 1 - 1e-9 or np.max(np.diff(sel)) > 0.05 + 1e-12:
        raise InvalidInputError("states must sample [T-2, T+1] with step <= 0.05")
    at_t = np.flatnonzero(np.isclose(times, T, atol=1e-12))
    if at_t.size == 0:
        raise InvalidInputError(f"no state sampled at T={T}")
    e_t = energy(np.asarray(states)[at_t[0]], op)
    integral = float(simpson(h1_squared(np.asarray(states)[mask], op), x=sel))
    if integral == 0:
        return 0.0
    return e_t / integral


def decay_experiment(
    op: DiscreteOperator,
    data: CauchyData,
    pressure_est=None,
    horizon: float = 150.0,
    damping=None,
    margin: float = 0.1,
    method: str = "ode",
    output_step: float = 0.5,
    kappa: float | None = None,
    dyn_horizon: float = 200.0,
    dyn_samples: int = 1000,
    seed: int = 0,
    spectrum=None,
) -> DecayReport:
    """Compare the fitted energy decay rate with ``2 min(G, C(inf))``."""
    from .dynamics import min_time_average

    geom = op.geometry
    if spectrum is None:
        spectrum = solve_spectrum(linearize(op), want_vectors=(method == "modal"))
    G = spectral_gap(spectrum)
    G = 0.0 if not np.isfinite(G) else max(G, 0.0)
    flags = []
    if damping is None:
        damping = Samples(tuple(op.damping))
    if isinstance(geom, (Circle, FlatTorus)):
        stats = min_time_average(damping, geom, dyn_horizon, dyn_samples, seed)
        c_inf, a_bar = stats.c_inf, stats.liouville_mean
    else:
        c_inf, a_bar = math.nan, float(np.mean(op.damping))
        flags.append("no_geodesic_flow")
    n_out = int(round(horizon / output_step))
    t_grid = np.linspace(0.0, n_out * output_step, n_out + 1)
    evo = evolve(op, data, t_grid, method=method, spectrum=spectrum)
    series = energy_series(evo, op)
    t0 = 5.0 / G if G > 0 else (5.0 / op.sup_damping if op.sup_damping > 0 else 0.0)
    if t0 > 0.8 * t_grid[-1]:
        flags.append("transient_not_excluded")
        t0 = 0.5 * t_grid[-1]
    positive = series.energies > 0
    if np.count_nonzero(positive) < 10 or np.max(series.energies) == 0:
        fit = DecayFit(0.0, 0.0, (t0, float(t_grid[-1])), 0)
    else:
        fit = fit_decay_rate(series, (t0, float(t_grid[-1])))
    c_for_min = c_inf if np.isfinite(c_inf) else G
    predicted = 2 * min(G, c_for_min)
    if np.isfinite(c_inf) and c_inf == 0:
        flags += ["c_inf_zero", "resolution_dependent"]
    pressure_rate = None
    if pressure_est is not None:
        value = getattr(pressure_est, "value", pressure_est)
        pressure_rate = 2 * min(G, abs(float(value) + margin))
        if isinstance(geom, (Circle, FlatTorus)):
            flags.append("pressure_informational_non_anosov")
    if kappa is None:
        kappa = (geom.dim / 2) if getattr(geom, "dim", None) else 0.5
    return DecayReport(
        G=float(G),
        c_inf=float(c_inf),
        a_bar=float(a_bar),
        fitted_rate=float(fit.rate),
        predicted_rate=float(predicted),
        window=fit.window,
        residual=fit.residual,
        kappa=float(kappa),
        predicted_rate_pressure=pressure_rate,
        flags=tuple(flags),
        series=series,
    )
