"""Discretised damped-wave operators and their spectra.

The damped wave equation ``u_tt - Lap u + 2 a u_t = 0`` is written as the
first-order system ``(d/dt + iB) U = 0`` with ``U = (u, i u_t)`` and

    B = [[0, I], [-Lap, -2i diag(a)]].

``B(u, tau u) = tau (u, tau u)`` holds exactly when ``P(tau) u = 0`` with the
quadratic pencil ``P(tau) = -Lap - tau^2 - 2i a tau``, so the eigenvalues of
the companion matrix ``B`` are the modes of the damped wave equation.
"""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import InvalidInputError, NumericalError, SingularError
from .geometry import Circle, FlatTorus, MatrixInput, sample_damping

log = logging.getLogger(__name__)

DEFAULT_DENSE_CAP = 4096
NEAR_DEFECTIVE = 1e8
PAIRING_RTOL = 1e-6
WEYL_LAMBDAS = (10.5, 20.5, 40.5)


# ---------------------------------------------------------------------------
# operators


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    laplacian: np.ndarray
    damping: np.ndarray
    geometry: object = None

    @property
    def n(self) -> int:
        return self.laplacian.shape[0]

    @property
    def sup_damping(self) -> float:
        return float(np.max(self.damping)) if self.damping.size else 0.0


def fourier_second_derivative(n: int, length: float) -> np.ndarray:
    """Dense periodic spectral second-derivative matrix.

    ``exp(i k x)`` is an exact eigenvector with eigenvalue ``-k^2`` for every
    resolved wavenumber; the Nyquist mode gets ``-(pi n / length)^2``.
    """
    k = np.fft.fftfreq(n, d=length / n) * 2 * np.pi
    col = np.fft.ifft(-(k**2)).real
    mat = sla.circulant(col)
    mat = 0.5 * (mat + mat.T)
    # exact zero row sums keep constants in the kernel to the last bit
    np.fill_diagonal(mat, 0.0)
    np.fill_diagonal(mat, -mat.sum(axis=1))
    return mat


def _validate_laplacian(lap: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(lap))))
    asym = float(np.max(np.abs(lap - lap.T)))
    if asym > 1e-12 * scale:
        raise InvalidInputError(f"laplacian not symmetric (max |L - L^T| = {asym:.3e})")
    top = float(sla.eigvalsh(lap, subset_by_index=[lap.shape[0] - 1, lap.shape[0] - 1])[0])
    if top > 1e-10 * scale:
        raise InvalidInputError(f"laplacian not negative semidefinite (largest eigenvalue {top:.3e})")
    kernel = float(np.max(np.abs(lap @ np.ones(lap.shape[0]))))
    if kernel > 1e-10 * scale:
        raise InvalidInputError(f"constant vector not in the laplacian kernel (residual {kernel:.3e})")


def assemble_operator(geometry, damping) -> DiscreteOperator:
    """Discretise the Laplacian of ``geometry`` and sample ``damping`` on its grid."""
    if isinstance(geometry, Circle):
        lap = fourier_second_derivative(geometry.n, geometry.length)
    elif isinstance(geometry, FlatTorus):
        dxx = fourier_second_derivative(geometry.nx, geometry.lx)
        dyy = fourier_second_derivative(geometry.ny, geometry.ly)
        lap = np.kron(dxx, np.eye(geometry.ny)) + np.kron(np.eye(geometry.nx), dyy)
    elif isinstance(geometry, MatrixInput):
        lap = np.array(geometry.laplacian, dtype=float)
        _validate_laplacian(lap)
    else:
        raise InvalidInputError(f"unsupported geometry {type(geometry).__name__}")
    a = sample_damping(damping, geometry)
    if not np.any(a > 0):
        log.warning("damping vanishes identically; the problem is conservative")
    return DiscreteOperator(laplacian=lap, damping=a, geometry=geometry)


@dataclass(frozen=True, eq=False)
class CompanionOperator:
    matrix: np.ndarray
    op: DiscreteOperator

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def linearize(op: DiscreteOperator) -> CompanionOperator:
    n = op.n
    dtype = complex if np.any(op.damping != 0) else float
    b = np.zeros((2 * n, 2 * n), dtype=dtype)
    b[:n, n:] = np.eye(n)
    b[n:, :n] = -op.laplacian
    if dtype is complex:
        b[n:, n:] = np.diag(-2j * op.damping)
    return CompanionOperator(matrix=b, op=op)


# ---------------------------------------------------------------------------
# spectrum


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    sup_damping: float
    vectors: np.ndarray | None = None
    left_vectors: np.ndarray | None = None
    condition: float = float("nan")
    eigencondition: np.ndarray | None = None
    norm: float = float("nan")
    geometry: object = None
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def near_defective(self) -> bool:
        return bool(self.condition > NEAR_DEFECTIVE)

    @property
    def cond_flags(self) -> np.ndarray:
        """Per-eigenvalue flag: 1 when its condition number exceeds the cap."""
        if self.eigencondition is None:
            return np.zeros(len(self.eigenvalues), dtype=int)
        return (self.eigencondition > NEAR_DEFECTIVE).astype(int)


def _separable_axis(op: DiscreteOperator) -> int | None:
    """Axis along which the torus damping is constant, if any."""
    geo = op.geometry
    if not isinstance(geo, FlatTorus):
        return None
    a = op.damping.reshape(geo.nx, geo.ny)
    if np.all(a == a[:, :1]):
        return 1
    if np.all(a == a[:1, :]):
        return 0
    return None


def _separable_eigenvalues(op: DiscreteOperator, axis: int) -> np.ndarray:
    # Fourier modes along ``axis`` reduce B to one 2n x 2n block per wavenumber
    geo = op.geometry
    if axis == 1:
        n_keep, length_keep, n_sep, length_sep = geo.nx, geo.lx, geo.ny, geo.ly
        a = op.damping.reshape(geo.nx, geo.ny)[:, 0]
    else:
        n_keep, length_keep, n_sep, length_sep = geo.ny, geo.ly, geo.nx, geo.lx
        a = op.damping.reshape(geo.nx, geo.ny)[0, :]
    d2 = fourier_second_derivative(n_keep, length_keep)
    k = np.fft.fftfreq(n_sep, d=length_sep / n_sep) * 2 * np.pi
    out = []
    for ks in k:
        block_op = DiscreteOperator(laplacian=d2 - ks**2 * np.eye(n_keep), damping=a)
        out.append(sla.eigvals(linearize(block_op).matrix, check_finite=True))
    return np.concatenate(out)


def solve_spectrum(
    b: CompanionOperator,
    want_vectors: bool = False,
    max_dim: int = DEFAULT_DENSE_CAP,
    method: str = "auto",
) -> Spectrum:
    """All eigenvalues of the companion matrix, optionally with eigenvectors.

    ``method="auto"`` uses an exact Fourier block reduction when the damping
    on a torus is constant along one axis and no vectors are requested; this
    is a similarity transform, so the eigenvalues are those of the dense
    problem.  Without damping the eigenvalues are ``+-sqrt`` of those of the
    symmetric ``-Lap``.  Otherwise a dense QR eigensolver is used.
    """
    size = b.n
    if method not in ("auto", "dense", "separable"):
        raise InvalidInputError(f"unknown method {method!r}")
    norm = float(np.linalg.norm(b.matrix, 1))
    axis = _separable_axis(b.op)
    provenance = {"dimension": size, "method": "dense"}
    if b.op.geometry is not None:
        provenance["geometry"] = repr(b.op.geometry)
    vectors = left = eigcond = None
    cond = float("nan")
    undamped = method == "auto" and not want_vectors and not np.any(b.op.damping)
    reduced = method == "separable" or (method == "auto" and axis is not None and not want_vectors)
    # the cap bounds the dense 2N x 2N solve; the reduced paths never form it
    if size > max_dim and not (undamped or reduced):
        raise InvalidInputError(f"companion dimension {size} exceeds the dense-solver cap {max_dim}")
    try:
        if undamped:
            # a = 0: B^2 = diag(-Lap, -Lap), so tau = +-sqrt(mu) over the eigenvalues mu of -Lap;
            # this keeps the Jordan block at 0 from splitting into +-sqrt(rounding)
            mu = sla.eigvalsh(-b.op.laplacian)
            mu = np.where(np.abs(mu) <= 1e-12 * max(1.0, float(np.max(np.abs(mu)))), 0.0, mu)
            root = np.sqrt(mu.astype(complex))
            tau = np.concatenate([root, -root])
            provenance["method"] = "undamped"
        elif reduced:
            if axis is None:
                raise InvalidInputError("separable method needs torus damping constant along an axis")
            tau = _separable_eigenvalues(b.op, axis)
            provenance["method"] = f"separable(axis={axis})"
        elif want_vectors:
            tau, left, vectors = sla.eig(b.matrix, left=True, right=True)
            vectors = vectors / np.linalg.norm(vectors, axis=0)
            left = left / np.linalg.norm(left, axis=0)
            overlap = np.abs(np.sum(left.conj() * vectors, axis=0))
            with np.errstate(divide="ignore"):
                eigcond = np.where(overlap > 0, 1.0 / overlap, np.inf)
            cond = float(np.linalg.cond(vectors))
            residual = np.linalg.norm(b.matrix @ vectors - vectors * tau, axis=0)
            provenance["max_residual"] = float(np.max(residual))
        else:
            tau = sla.eigvals(b.matrix)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigensolver failed on a {size}x{size} companion matrix: {exc}") from exc
    if not np.all(np.isfinite(tau)):
        raise NumericalError(f"eigensolver returned {int(np.sum(~np.isfinite(tau)))} non-finite eigenvalues")
    spec = Spectrum(
        eigenvalues=np.asarray(tau, dtype=complex),
        sup_damping=b.op.sup_damping,
        vectors=vectors,
        left_vectors=left,
        condition=cond,
        eigencondition=eigcond,
        norm=norm,
        geometry=b.op.geometry,
        provenance=provenance,
    )
    if spec.near_defective:
        log.warning("near-defective spectrum: eigenvector condition %.3e", cond)
    return spec


def constant_damping_oracle(k_sq: float, a0: float) -> tuple[complex, complex]:
    """Roots of ``tau^2 + 2i a0 tau - k_sq = 0``.

    Ordered by descending imaginary part, then descending real part.
    """
    root = cmath.sqrt(k_sq - a0 * a0)
    roots = [complex(-1j * a0 + root), complex(-1j * a0 - root)]
    roots.sort(key=lambda z: (-z.imag, -z.real))
    return roots[0], roots[1]


def laplacian_eigenvalues(geometry) -> np.ndarray:
    """Eigenvalues of the discrete Laplacian, from the Fourier symbol when available."""
    if isinstance(geometry, (Circle, FlatTorus)):
        return -np.sum(geometry.wavenumbers() ** 2, axis=1)
    if isinstance(geometry, MatrixInput):
        return sla.eigvalsh(geometry.laplacian)
    raise InvalidInputError(f"unsupported geometry {type(geometry).__name__}")


def oracle_spectrum(geometry, a0: float) -> np.ndarray:
    """Closed-form spectrum of B for constant damping ``a0``."""
    roots = [constant_damping_oracle(-lam, a0) for lam in laplacian_eigenvalues(geometry)]
    return np.array([r for pair in roots for r in pair], dtype=complex)


def match_spectra(computed, reference) -> tuple[np.ndarray, float]:
    """Optimal bijection between two eigenvalue lists.

    Returns the permutation ``perm`` with ``computed[perm[i]] ~ reference[i]``
    and the worst hybrid error ``|diff| / (1 + |reference|)``.
    """
    computed = np.asarray(computed)
    reference = np.asarray(reference)
    if computed.shape != reference.shape:
        raise InvalidInputError(f"spectra differ in size: {computed.shape} vs {reference.shape}")
    cost = np.abs(reference[:, None] - computed[None, :]) / (1 + np.abs(reference[:, None]))
    rows, cols = linear_sum_assignment(cost)
    return cols[np.argsort(rows)], float(np.max(cost[rows, cols]))


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class DiagnosticsReport:
    band_ok: bool
    symmetry_ok: bool
    gap: float
    weyl: list
    max_im: float
    min_im: float
    symmetry_error: float

    def to_dict(self) -> dict:
        return {
            "band_ok": self.band_ok,
            "symmetry_ok": self.symmetry_ok,
            "gap": self.gap,
            "weyl": self.weyl,
        }


def zero_tolerance(spec: Spectrum) -> float:
    norm = spec.norm if np.isfinite(spec.norm) else max(1.0, float(np.max(np.abs(spec.eigenvalues))))
    return 1e-8 * norm


def spectral_gap(spec: Spectrum) -> float:
    """``min(-Im tau)`` over eigenvalues with ``|tau|`` above the zero tolerance."""
    tau = spec.eigenvalues
    nonzero = tau[np.abs(tau) > zero_tolerance(spec)]
    if nonzero.size == 0:
        return float("nan")
    return float(np.min(-nonzero.imag))


def symmetry_error(tau) -> float:
    """Largest ``min_j |tau_j + conj(tau_i)| / (1 + |tau_i|)`` over ``i``."""
    tau = np.asarray(tau)
    pts = np.column_stack([tau.real, tau.imag])
    mirrored = np.column_stack([-tau.real, tau.imag])
    dist, _ = cKDTree(pts).query(mirrored)
    return float(np.max(dist / (1 + np.abs(tau))))


def weyl_prediction(geometry, lam: float) -> float:
    """Leading Weyl term ``(lam / 2 pi)^d vol{|xi|^2 <= 1}``."""
    d = geometry.dim
    unit_ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    return (lam / (2 * math.pi)) ** d * geometry.volume * unit_ball


def weyl_count(spec: Spectrum, lam: float) -> int:
    """Number of eigenvalues with ``0 < Re tau <= lam``."""
    re = spec.eigenvalues.real
    return int(np.sum((re > zero_tolerance(spec)) & (re <= lam)))


def nyquist_wavenumber(geometry) -> float:
    return float(np.min([math.pi * n / p for n, p in zip(geometry.shape, geometry.periods)]))


def spectrum_diagnostics(spec: Spectrum, lambdas=None, tol: float = 1e-8) -> DiagnosticsReport:
    tau = spec.eigenvalues
    max_im = float(np.max(tau.imag))
    min_im = float(np.min(tau.imag))
    band_ok = max_im <= tol and min_im >= -2 * spec.sup_damping - tol
    sym_err = symmetry_error(tau)
    weyl = []
    geo = spec.geometry
    if isinstance(geo, (Circle, FlatTorus)):
        if lambdas is None:
            cutoff = nyquist_wavenumber(geo)
            lambdas = [lam for lam in WEYL_LAMBDAS if lam < cutoff]
        for lam in lambdas:
            weyl.append({"lambda": float(lam), "measured": weyl_count(spec, lam), "predicted": weyl_prediction(geo, lam)})
    return DiagnosticsReport(
        band_ok=bool(band_ok),
        symmetry_ok=bool(sym_err <= PAIRING_RTOL),
        gap=spectral_gap(spec),
        weyl=weyl,
        max_im=max_im,
        min_im=min_im,
        symmetry_error=sym_err,
    )


# ---------------------------------------------------------------------------
# pencil and resolvent


@dataclass(frozen=True, eq=False)
class QuadraticPencil:
    op: DiscreteOperator

    def __call__(self, tau: complex) -> np.ndarray:
        n = self.op.n
        out = -self.op.laplacian.astype(complex)
        if tau != 0:
            out = out - tau * tau * np.eye(n) - np.diag(2j * tau * self.op.damping)
        return out

    def semiclassical(self, z: complex, hbar: float) -> np.ndarray:
        """``Q(z, hbar) = hbar^2 P(tau)`` with ``tau = sqrt(2 z) / hbar``."""
        tau = cmath.sqrt(2 * z) / hbar
        return hbar**2 * self(tau)


def resolvent_norm(pencil: QuadraticPencil, tau: complex) -> float:
    """``||P(tau)^{-1}||_2 = 1 / sigma_min(P(tau))``; ``inf`` when numerically singular.

    Singular means ``sigma_min <= n * eps * sigma_max``, the usual numerical-rank cutoff.
    """
    mat = pencil(tau)
    sigma = sla.svdvals(mat)
    smin = float(sigma[-1])
    if smin <= mat.shape[0] * np.finfo(float).eps * float(sigma[0]):
        return float("inf")
    return 1.0 / smin


def resolvent_sweep(pencil: QuadraticPencil, gamma: float, re_values) -> dict:
    """Resolvent norms along ``Im tau = gamma`` and the log-log slope against <tau>."""
    re_values = np.asarray(re_values, dtype=float)
    taus = re_values + 1j * gamma
    norms = np.array([resolvent_norm(pencil, t) for t in taus])
    bracket = np.sqrt(1 + np.abs(taus) ** 2)
    ok = np.isfinite(norms)
    slope = float(np.polyfit(np.log(bracket[ok]), np.log(norms[ok]), 1)[0]) if ok.sum() >= 2 else float("nan")
    return {"gamma": gamma, "re": re_values, "norms": norms, "bracket": bracket, "slope": slope}


def companion_resolvent_blocks(op: DiscreteOperator, tau: complex) -> np.ndarray:
    """``(tau - B)^{-1}`` assembled from ``R(tau) = P(tau)^{-1}``.

    Block layout::

        [[R (-2ia - tau),            -R      ],
         [R (-2ia tau - tau^2) - I,  -tau R  ]]
    """
    n = op.n
    p = QuadraticPencil(op)(tau)
    try:
        r = sla.solve(p, np.eye(n, dtype=complex))
    except sla.LinAlgError as exc:
        raise SingularError(f"P(tau) singular at tau={tau}") from exc
    a = op.damping
    top_left = r * (-2j * a - tau)[None, :]
    bottom_left = r * (-2j * a * tau - tau * tau)[None, :] - np.eye(n)
    return np.block([[top_left, -r], [bottom_left, -tau * r]])


def resolvent_block_check(op: DiscreteOperator, tau: complex) -> float:
    """Max elementwise difference between the dense and block-assembled resolvents."""
    shifted = tau * np.eye(2 * op.n) - linearize(op).matrix
    if 1.0 / np.linalg.cond(shifted) < 100 * np.finfo(float).eps:
        raise SingularError(f"tau={tau} is (numerically) an eigenvalue: tau - B is singular")
    dense = sla.inv(shifted)
    return float(np.max(np.abs(dense - companion_resolvent_blocks(op, tau))))


# ---------------------------------------------------------------------------
# semiclassical rescaling


@dataclass(frozen=True)
class RescaledEigenvalue:
    tau: complex
    hbar: float
    lam: complex
    z: complex
    zeta: complex

    def reconstruct_tau(self) -> complex:
        return self.lam / self.hbar


def semiclassical_rescale(tau: complex, hbar: float) -> RescaledEigenvalue:
    if not 0 < hbar <= 1:
        raise InvalidInputError(f"hbar must lie in (0, 1], got {hbar}")
    tau = complex(tau)
    lam = hbar * tau
    z = lam * lam / 2
    zeta = (z - 0.5) / hbar
    return RescaledEigenvalue(tau=tau, hbar=hbar, lam=lam, z=z, zeta=zeta)
