"""Bolza surface: Fuchsian group, Dirichlet-domain reduction and frame geometry.

Frames are matrices ``g`` in SL(2, R) acting on the upper half-plane; the
base point of a frame is ``g . i`` and its direction is the image of the
upward unit vector at ``i``.  The geodesic flow is right multiplication by
``a_t = diag(e^{t/2}, e^{-t/2})``.  Points are displayed in the Poincare disk
through the Cayley map ``w = (z - i) / (z + i)``, which sends ``i`` to the
origin, the centre of the regular octagon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ReductionError

MAX_REDUCTION_STEPS = 64
BOUNDARY_TOL = 1e-12

# cosh of the distance from the octagon centre to a side midpoint (= cosh(l/2))
COSH_INRADIUS = 1.0 + np.sqrt(2.0)
INRADIUS = float(np.arccosh(COSH_INRADIUS))
# vertex distance: cosh R = cot(pi/8)^2
CIRCUMRADIUS = float(np.arccosh(COSH_INRADIUS**2))
TRANSLATION_LENGTH = 2 * INRADIUS
AREA = 4 * np.pi
INJECTIVITY_RADIUS = INRADIUS  # half the systole 2*arccosh(1+sqrt 2)


def rotation(theta):
    """``K(theta)``; acts on the disk as the rotation by ``2 theta``."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]])


def boost(length):
    return np.diag([np.exp(length / 2), np.exp(-length / 2)])


def geodesic_matrix(t):
    """``a_t``, broadcast over an array of times: shape ``(..., 2, 2)``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape + (2, 2))
    out[..., 0, 0] = np.exp(t / 2)
    out[..., 1, 1] = np.exp(-t / 2)
    return out


def unstable_matrix(u):
    """``exp(u F)`` with ``F = [[0, 0], [1, 0]]``: the unstable horocycle."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape + (2, 2))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 1, 0] = u
    return out


def translation(length, direction):
    """Hyperbolic translation through ``i`` along the disk diameter at angle ``direction``."""
    return rotation(direction / 2) @ boost(length) @ rotation(-direction / 2)


def _make_generators():
    gens = np.array([translation(TRANSLATION_LENGTH, k * np.pi / 4) for k in range(8)])
    inverses = np.array([np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]) for g in gens])
    return gens, inverses


# g_k pairs side k+4 with side k (opposite sides); g_{k+4} = g_k^{-1}
GENERATORS, GENERATOR_INVERSES = _make_generators()


def sl2_inverse(g):
    g = np.asarray(g)
    out = np.empty_like(g)
    out[..., 0, 0] = g[..., 1, 1]
    out[..., 1, 1] = g[..., 0, 0]
    out[..., 0, 1] = -g[..., 0, 1]
    out[..., 1, 0] = -g[..., 1, 0]
    return out


def sq_frobenius(g):
    return np.sum(np.asarray(g) ** 2, axis=(-2, -1))


def canonical_sign(g):
    """Representative of ``+-g`` with ``g[0,0] > 0`` (or ``g[0,1] > 0`` if ``g[0,0] == 0``)."""
    g = np.asarray(g, dtype=float)
    lead = np.where(g[..., 0, 0] != 0, g[..., 0, 0], g[..., 0, 1])
    sign = np.where(lead < 0, -1.0, 1.0)
    return g * sign[..., None, None]


def renormalize(g):
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    return g / np.sqrt(det)[..., None, None]


def reduce_fundamental_domain(g):
    """Move frames into the closed fundamental octagon.

    ``cosh d(g i, h i) = |h^{-1} g|_F^2 / 2``, so ``g i`` is closer to
    ``g_k i`` than to ``i`` exactly when ``|g_k^{-1} g|_F < |g|_F``.  While
    some generator strictly decreases the distance to the centre, the
    lowest-indexed such generator is applied.  Accepts a single ``2x2``
    matrix or a stack ``(n, 2, 2)``.
    """
    g = np.array(g, dtype=float)
    single = g.ndim == 2
    if single:
        g = g[None]
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    if np.any(np.abs(det - 1) > 1e-8):
        raise InvalidInputError(f"frames must have det 1 (worst det {det[np.argmax(np.abs(det - 1))]!r})")
    active = np.ones(len(g), dtype=bool)
    for _ in range(MAX_REDUCTION_STEPS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        sub = g[idx]
        norm0 = sq_frobenius(sub)
        moved = np.einsum("kij,njl->nkil", GENERATOR_INVERSES, sub)
        norms = sq_frobenius(moved)
        better = norms < norm0[:, None] * (1 - BOUNDARY_TOL)
        any_better = better.any(axis=1)
        choice = np.argmax(better, axis=1)
        step = idx[any_better]
        g[step] = moved[any_better, choice[any_better]]
        active[idx[~any_better]] = False
    else:
        if active.any():
            bad = np.flatnonzero(active)[0]
            raise ReductionError(
                f"reduction exceeded {MAX_REDUCTION_STEPS} generator applications; frame {g[bad].tolist()}"
            )
    g = canonical_sign(g)
    return g[0] if single else g


def in_fundamental_domain(g, tol=BOUNDARY_TOL):
    g = np.asarray(g, dtype=float)
    norm0 = sq_frobenius(g)
    moved = np.einsum("kij,...jl->...kil", GENERATOR_INVERSES, g)
    return np.all(sq_frobenius(moved) >= norm0[..., None] * (1 - tol), axis=-1)


def base_point(g):
    """Base point ``g . i`` in the upper half-plane."""
    g = np.asarray(g)
    return (g[..., 0, 0] * 1j + g[..., 0, 1]) / (g[..., 1, 0] * 1j + g[..., 1, 1])


def to_disk(z):
    return (z - 1j) / (z + 1j)


def frame_coordinates(g):
    """Disk coordinates ``(x, y)`` of the base point and the direction angle."""
    g = np.asarray(g)
    z = base_point(g)
    w = to_disk(z)
    # tangent of t -> g a_t i at t=0 is i / (c i + d)^2; push through the Cayley map
    v = 1j / (g[..., 1, 0] * 1j + g[..., 1, 1]) ** 2
    dw = 2j / (z + 1j) ** 2 * v
    return np.stack([w.real, w.imag, np.mod(np.angle(dw), 2 * np.pi)], axis=-1)


def distance_from_origin(g):
    """Hyperbolic distance of the base point from the octagon centre."""
    return np.arccosh(np.maximum(sq_frobenius(g) / 2, 1.0))


def sl2_log_coordinates(h):
    """Coordinates ``(2p, q, r)`` of ``log h`` where ``log h = [[p, q], [r, -p]]``.

    The sign of ``h`` is chosen with non-negative trace (PSL).  Scaled so that
    the flow ``a_t`` has coordinate ``t`` and the horocycles ``exp(sE)``,
    ``exp(sF)`` have coordinate ``s``.
    """
    h = np.asarray(h, dtype=float)
    tr = h[..., 0, 0] + h[..., 1, 1]
    flip = tr < 0
    h = np.where(flip[..., None, None], -h, h)
    tr = np.abs(tr)
    half = tr / 2
    with np.errstate(invalid="ignore", divide="ignore"):
        hyper = half > 1
        s = np.where(hyper, np.arccosh(np.maximum(half, 1.0)), np.arccos(np.clip(half, -1.0, 1.0)))
        sn = np.where(hyper, np.sinh(s), np.sin(s))
        factor = np.where(np.abs(s) > 1e-8, s / np.where(sn == 0, 1.0, sn), 1.0 + np.where(hyper, -1, 1) * s**2 / 6)
    p = factor * (h[..., 0, 0] - half)
    q = factor * h[..., 0, 1]
    r = factor * h[..., 1, 0]
    return np.stack([2 * p, q, r], axis=-1)


def frame_distance(g1, g2):
    """Left-invariant distance ``|log(g1^{-1} g2)|`` between lifted frames."""
    coords = sl2_log_coordinates(sl2_inverse(g1) @ g2)
    return np.sqrt(np.sum(coords**2, axis=-1))


def frame_from_disk(w, direction_angle):
    """Frame with base point ``w`` in the disk and tangent direction angle (disk)."""
    w = np.asarray(w, dtype=complex)
    r = 2 * np.arctanh(np.abs(w))
    phi = np.angle(w)
    g = np.einsum("...ij,...jk->...ik", _stack(rotation, phi / 2), _stack(boost, r))
    # at the base point the frame currently points radially outward (angle phi)
    k = _stack(rotation, (direction_angle - phi) / 2)
    return renormalize(np.einsum("...ij,...jk->...ik", g, k))


def _stack(fn, values):
    values = np.asarray(values, dtype=float)
    return np.array([fn(v) for v in values.ravel()]).reshape(values.shape + (2, 2))


@dataclass(frozen=True)
class BolzaSurface:
    """Genus-2 surface of curvature -1 with the regular octagon as fundamental domain.

    Flow-only geometry: no Laplacian is discretised on it.
    """

    dim = 2
    volume = AREA

    @property
    def phase_volume(self) -> float:
        return 2 * np.pi * AREA


def sample_frames(n: int, rng: np.random.Generator) -> np.ndarray:
    """Liouville (Haar) uniform frames with base point in the octagon.

    Base points are drawn uniformly for hyperbolic area in the circumscribed
    disk by inverting the radial law ``sinh r dr`` and rejected outside the
    octagon; the direction is uniform.
    """
    out = []
    need = n
    cosh_r = np.cosh(CIRCUMRADIUS)
    while need > 0:
        batch = max(64, int(need * 1.6))
        r = np.arccosh(1 + rng.random(batch) * (cosh_r - 1))
        phi = rng.random(batch) * 2 * np.pi
        psi = rng.random(batch) * np.pi
        g = np.einsum(
            "nij,njk,nkl->nil",
            _stack(rotation, phi / 2),
            _stack(boost, r),
            _stack(rotation, psi),
        )
        keep = in_fundamental_domain(g, tol=0.0)
        out.append(g[keep][:need])
        need -= int(min(need, keep.sum()))
    return canonical_sign(np.concatenate(out)[:n])
