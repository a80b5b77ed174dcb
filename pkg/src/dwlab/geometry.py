"""Model geometries and damping profiles.

A geometry owns a periodic grid (circle, flat torus) or wraps a user supplied
Laplacian matrix.  A damping profile is a non-negative function that can be
sampled on that grid and evaluated at arbitrary points of the manifold, which
the dynamics module needs when integrating along geodesics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import InvalidInputError

MIN_RESOLUTION = 8
MAX_CIRCLE_RESOLUTION = 2048
MAX_TORUS_RESOLUTION = 64


@dataclass(frozen=True)
class Circle:
    length: float = 2 * np.pi
    n: int = 64

    def __post_init__(self):
        if not self.length > 0:
            raise InvalidInputError(f"circle length must be positive, got {self.length}")
        if not MIN_RESOLUTION <= self.n <= MAX_CIRCLE_RESOLUTION:
            raise InvalidInputError(
                f"circle resolution must lie in [{MIN_RESOLUTION}, {MAX_CIRCLE_RESOLUTION}], got {self.n}"
            )

    dim = 1

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,)

    @property
    def periods(self) -> tuple[float, ...]:
        return (self.length,)

    @property
    def volume(self) -> float:
        return self.length

    @property
    def cell_volume(self) -> float:
        return self.length / self.n

    @property
    def size(self) -> int:
        return self.n

    def points(self) -> np.ndarray:
        """Grid nodes as an ``(n, 1)`` array."""
        return (np.arange(self.n) * self.length / self.n)[:, None]

    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers of the grid modes, FFT ordering, shape ``(n, 1)``."""
        k = np.fft.fftfreq(self.n, d=self.length / self.n) * 2 * np.pi
        return k[:, None]


@dataclass(frozen=True)
class FlatTorus:
    lx: float = 1.0
    ly: float = 1.0
    nx: int = 16
    ny: int = 16

    def __post_init__(self):
        if not (self.lx > 0 and self.ly > 0):
            raise InvalidInputError(f"torus side lengths must be positive, got {(self.lx, self.ly)}")
        for n in (self.nx, self.ny):
            if not MIN_RESOLUTION <= n <= MAX_TORUS_RESOLUTION:
                raise InvalidInputError(
                    f"torus resolution must lie in [{MIN_RESOLUTION}, {MAX_TORUS_RESOLUTION}] per axis, "
                    f"got {(self.nx, self.ny)}"
                )

    dim = 2

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nx, self.ny)

    @property
    def periods(self) -> tuple[float, ...]:
        return (self.lx, self.ly)

    @property
    def volume(self) -> float:
        return self.lx * self.ly

    @property
    def cell_volume(self) -> float:
        return self.volume / (self.nx * self.ny)

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def points(self) -> np.ndarray:
        # x-major flattening, consistent with kron(Dxx, I) + kron(I, Dyy)
        x = np.arange(self.nx) * self.lx / self.nx
        y = np.arange(self.ny) * self.ly / self.ny
        X, Y = np.meshgrid(x, y, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def wavenumbers(self) -> np.ndarray:
        kx = np.fft.fftfreq(self.nx, d=self.lx / self.nx) * 2 * np.pi
        ky = np.fft.fftfreq(self.ny, d=self.ly / self.ny) * 2 * np.pi
        KX, KY = np.meshgrid(kx, ky, indexing="ij")
        return np.column_stack([KX.ravel(), KY.ravel()])


@dataclass(frozen=True)
class MatrixInput:
    """A Laplacian read from a Matrix Market file (real symmetric, spectrum <= 0)."""

    path: str
    volume: float = 1.0
    laplacian: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.laplacian is None:
            from .io import read_matrix_market

            object.__setattr__(self, "laplacian", read_matrix_market(self.path))
        mat = np.asarray(self.laplacian, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise InvalidInputError(f"laplacian must be square, got shape {mat.shape}")
        if mat.shape[0] < MIN_RESOLUTION:
            raise InvalidInputError(f"laplacian dimension must be >= {MIN_RESOLUTION}, got {mat.shape[0]}")
        object.__setattr__(self, "laplacian", mat)

    dim = None

    @classmethod
    def from_array(cls, laplacian, volume: float = 1.0) -> "MatrixInput":
        return cls(path="<array>", volume=volume, laplacian=np.asarray(laplacian, dtype=float))

    @property
    def size(self) -> int:
        return self.laplacian.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.size,)

    @property
    def cell_volume(self) -> float:
        return self.volume / self.size


Geometry = Union[Circle, FlatTorus, MatrixInput]


def periodic_offset(x, center, period):
    """Signed offset ``x - center`` wrapped into ``[-period/2, period/2)``."""
    return np.mod(np.asarray(x) - center + period / 2, period) - period / 2


def smooth_step(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, built from exp(-1/u)."""
    u = np.asarray(u, dtype=float)

    def psi(v):
        out = np.zeros_like(v)
        pos = v > 0
        out[pos] = np.exp(-1.0 / v[pos])
        return out

    a = psi(u)
    b = psi(1.0 - u)
    return a / (a + b)


# ---------------------------------------------------------------------------
# damping profiles


@dataclass(frozen=True)
class Constant:
    a0: float

    def __post_init__(self):
        if not (np.isfinite(self.a0) and self.a0 >= 0):
            raise InvalidInputError(f"damping must be non-negative, got a0={self.a0}")

    @property
    def sup_norm(self) -> float:
        return float(self.a0)

    @property
    def is_constant(self) -> bool:
        return True

    def evaluate(self, coords, geometry=None) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        return np.full(coords.shape[:-1], float(self.a0))


@dataclass(frozen=True)
class SmoothedStrip:
    """Mollified indicator of ``|x_axis - center| <= width/2`` (periodically wrapped).

    The transition is centred on the nominal edge and has total length
    ``smoothing``, so the profile integrates to exactly ``a0 * width`` across
    the axis and vanishes identically outside ``width/2 + smoothing/2``.
    """

    center: float
    width: float
    a0: float
    smoothing: float = 0.05
    axis: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.a0) and self.a0 >= 0):
            raise InvalidInputError(f"damping must be non-negative, got a0={self.a0}")
        if not self.width > 0:
            raise InvalidInputError(f"strip width must be positive, got {self.width}")
        if not 0 < self.smoothing <= self.width:
            raise InvalidInputError(
                f"strip smoothing must lie in (0, width], got smoothing={self.smoothing}, width={self.width}"
            )

    @property
    def sup_norm(self) -> float:
        return float(self.a0)

    @property
    def is_constant(self) -> bool:
        return False

    def evaluate(self, coords, geometry) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        period = geometry.periods[self.axis]
        d = np.abs(periodic_offset(coords[..., self.axis], self.center, period))
        u = (self.width / 2 + self.smoothing / 2 - d) / self.smoothing
        return self.a0 * smooth_step(u)


@dataclass(frozen=True)
class Samples:
    """Damping given by its values at the grid nodes.

    Off-grid values use periodic (bi)linear interpolation, which keeps the
    interpolant inside ``[min, max]`` of the samples.
    """

    values: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("damping samples must be finite")
        if np.any(vals < 0):
            bad = int(np.argmin(vals))
            raise InvalidInputError(f"damping must be non-negative, sample {bad} is {vals[bad]}")
        object.__setattr__(self, "values", tuple(vals.ravel().tolist()))

    @classmethod
    def from_function(cls, func, geometry) -> "Samples":
        return cls(tuple(np.asarray(func(geometry.points()), dtype=float).ravel()))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.values)

    @property
    def sup_norm(self) -> float:
        return float(np.max(self.array)) if self.values else 0.0

    @property
    def is_constant(self) -> bool:
        vals = self.array
        return bool(np.all(vals == vals[0]))

    def evaluate(self, coords, geometry) -> np.ndarray:
        coords = np.asarray(coords, dtype=float)
        vals = self.array.reshape(geometry.shape)
        # fractional grid index along each axis
        idx = [np.mod(coords[..., ax] / geometry.periods[ax] * n, n) for ax, n in enumerate(geometry.shape)]
        lo = [np.floor(i).astype(int) for i in idx]
        frac = [i - l for i, l in zip(idx, lo)]
        out = np.zeros(coords.shape[:-1])
        dim = len(geometry.shape)
        for corner in range(2**dim):
            weight = np.ones(coords.shape[:-1])
            index = []
            for ax in range(dim):
                bit = (corner >> ax) & 1
                weight = weight * (frac[ax] if bit else 1 - frac[ax])
                index.append((lo[ax] + bit) % geometry.shape[ax])
            out = out + weight * vals[tuple(index)]
        return out


DampingProfile = Union[Constant, SmoothedStrip, Samples]


def sample_damping(profile, geometry) -> np.ndarray:
    """Damping values at the grid nodes of ``geometry`` as a flat vector."""
    if isinstance(geometry, MatrixInput):
        if isinstance(profile, Constant):
            return np.full(geometry.size, float(profile.a0))
        if isinstance(profile, Samples):
            vals = profile.array
            if vals.size != geometry.size:
                raise InvalidInputError(
                    f"damping has {vals.size} samples but the matrix has dimension {geometry.size}"
                )
            return vals.copy()
        raise InvalidInputError(f"{type(profile).__name__} damping needs grid coordinates; use Samples")
    if isinstance(profile, Samples):
        vals = profile.array
        if vals.size != geometry.size:
            raise InvalidInputError(f"damping has {vals.size} samples but the grid has {geometry.size} nodes")
        return vals.copy()
    vals = profile.evaluate(geometry.points(), geometry)
    if np.any(vals < 0):
        raise InvalidInputError("damping must be non-negative on the grid")
    return vals
