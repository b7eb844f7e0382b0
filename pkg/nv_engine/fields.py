"""Surface charge maps and the stray electric field above them.

Three independent solvers share the ``FieldSampler`` interface:

* ``FourierGridSampler`` filters the charge spectrum with the half-space
  kernel e^{-kz} and transforms back (the production path),
* ``AnalyticLineChargeSampler`` evaluates the closed-form field of an
  infinite line charge,
* ``CoulombOracleSampler`` sums point charges cell by cell (tests only).

All lengths are meters, fields V/m, charge densities C/m^2.
"""

import functools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy import constants, ndimage

from app_utils.config_manager import get_config_manager
from app_utils.errors import DomainError, ValidationError
from app_utils.threading_helper import parallel_map

logger = logging.getLogger(__name__)

EPSILON_0 = constants.epsilon_0

# Points per chunk for the brute-force Coulomb sum
_COULOMB_CHUNK = 256


class FieldConvention(str, Enum):
    """Global prefactor convention of the computed fields"""
    PAPER = "paper"
    TEXTBOOK = "textbook"


def convention_factor(convention: FieldConvention) -> float:
    """Scale applied to the textbook field to obtain the given convention.

    The paper-convention line-charge field is -lambda/(4 pi^2 eps0) (x, 0, z)/r^2,
    i.e. the textbook lambda/(2 pi eps0) (x, 0, z)/r^2 times -1/(2 pi).
    """
    convention = FieldConvention(convention)
    if convention is FieldConvention.TEXTBOOK:
        return 1.0
    return -1.0 / (2.0 * math.pi)


@dataclass(frozen=True)
class ChargeMap:
    """Regular grid of surface charge density in the z = 0 plane.

    ``sigma[i, j]`` is the density of the cell centered at
    ``(origin[0] + i*dx, origin[1] + j*dy)``.
    """
    sigma: np.ndarray
    dx: float
    dy: float
    origin: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        if sigma.ndim != 2:
            raise ValidationError(f"sigma must be 2-D, got shape {sigma.shape}")
        if sigma.shape[0] < 2 or sigma.shape[1] < 2:
            raise ValidationError(f"Charge map must be at least 2x2, got {sigma.shape}")
        if not (self.dx > 0 and self.dy > 0):
            raise ValidationError(f"Grid spacing must be positive, got dx={self.dx}, dy={self.dy}")
        if not np.all(np.isfinite(sigma)):
            raise ValidationError("Charge map contains non-finite entries")
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def nx(self) -> int:
        return self.sigma.shape[0]

    @property
    def ny(self) -> int:
        return self.sigma.shape[1]

    @property
    def x_coords(self) -> np.ndarray:
        return self.origin[0] + self.dx * np.arange(self.nx)

    @property
    def y_coords(self) -> np.ndarray:
        return self.origin[1] + self.dy * np.arange(self.ny)

    @property
    def extent(self) -> Tuple[float, float]:
        """Physical size (nx*dx, ny*dy)"""
        return (self.nx * self.dx, self.ny * self.dy)

    @property
    def uniform_axes(self) -> Tuple[bool, bool]:
        """Whether sigma is constant along x and along y"""
        return (bool(np.all(self.sigma == self.sigma[:1, :])),
                bool(np.all(self.sigma == self.sigma[:, :1])))

    def total_charge_density_integral(self) -> float:
        """Integral of sigma over the map (C)"""
        return float(self.sigma.sum() * self.dx * self.dy)

    def shifted(self, a: float, b: float) -> "ChargeMap":
        """Same charge pattern with the origin moved by (a, b)"""
        return ChargeMap(self.sigma, self.dx, self.dy, (self.origin[0] + a, self.origin[1] + b))

    def same_grid(self, other: "ChargeMap") -> bool:
        return (self.sigma.shape == other.sigma.shape and self.dx == other.dx
                and self.dy == other.dy and self.origin == other.origin)


def superpose(*charges: ChargeMap) -> ChargeMap:
    """Sum of charge maps defined on the same grid"""
    if not charges:
        raise ValidationError("Nothing to superpose")
    first = charges[0]
    for other in charges[1:]:
        if not first.same_grid(other):
            raise ValidationError("Charge maps must share shape, spacing and origin")
    total = np.sum([c.sigma for c in charges], axis=0)
    return ChargeMap(total, first.dx, first.dy, first.origin)


def _as_points(points) -> Tuple[np.ndarray, Tuple[int, ...]]:
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != 3:
        raise ValidationError(f"Points must have a trailing dimension of 3, got {pts.shape}")
    return pts.reshape(-1, 3), pts.shape[:-1]


class FieldSampler(ABC):
    """Evaluates the lab-frame electric field at points above the surface.

    Samplers are immutable after construction and can be evaluated from
    several threads at once.
    """

    kind: str = ""

    def __init__(self, convention: FieldConvention = FieldConvention.PAPER):
        self.convention = FieldConvention(convention)

    def field(self, points) -> np.ndarray:
        """Field vectors at points of shape (..., 3); returns shape (..., 3)"""
        flat, shape = _as_points(points)
        values = self._evaluate(flat)
        return values.reshape(shape + (3,))

    def __call__(self, points) -> np.ndarray:
        return self.field(points)

    @abstractmethod
    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on an (N, 3) array"""


class UniformSampler(FieldSampler):
    """Constant field everywhere"""

    kind = "uniform"

    def __init__(self, vector: Sequence[float],
                 convention: FieldConvention = FieldConvention.PAPER):
        super().__init__(convention)
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (3,) or not np.all(np.isfinite(vector)):
            raise ValidationError(f"Uniform field must be a finite 3-vector, got {vector!r}")
        self.vector = vector

    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.vector, points.shape).copy()


def analytic_line_charge_field(x, z, lam: float,
                               convention: FieldConvention = FieldConvention.PAPER) -> np.ndarray:
    """Field of an infinite line charge along y through the origin.

    Returns (E_x, 0, E_z) with a trailing axis of length 3; x and z broadcast.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise DomainError("Line-charge field requires z > 0")

    r2 = x * x + z * z
    scale = convention_factor(convention) * lam / (2.0 * math.pi * EPSILON_0)
    ex = scale * x / r2
    ez = scale * z / r2
    return np.stack([ex, np.zeros_like(ex), ez], axis=-1)


class AnalyticLineChargeSampler(FieldSampler):
    """Closed-form field of a line charge along y at x = x_line"""

    kind = "analytic_line_charge"

    def __init__(self, lam: float, x_line: float = 0.0,
                 convention: FieldConvention = FieldConvention.PAPER):
        super().__init__(convention)
        if not math.isfinite(lam):
            raise ValidationError(f"Line density must be finite, got {lam}")
        self.lam = float(lam)
        self.x_line = float(x_line)

    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        return analytic_line_charge_field(points[:, 0] - self.x_line, points[:, 2],
                                          self.lam, self.convention)


class CoulombOracleSampler(FieldSampler):
    """Direct superposition of every cell treated as a point charge sigma*dx*dy"""

    kind = "coulomb_oracle"

    def __init__(self, charge: ChargeMap,
                 convention: FieldConvention = FieldConvention.TEXTBOOK):
        super().__init__(convention)
        self.charge = charge
        xs, ys = np.meshgrid(charge.x_coords, charge.y_coords, indexing="ij")
        mask = charge.sigma != 0
        self._sources = np.stack([xs[mask], ys[mask]], axis=-1)
        self._q = charge.sigma[mask] * charge.dx * charge.dy

    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        if np.any(points[:, 2] <= 0):
            raise DomainError("Coulomb sum requires points strictly above the surface")

        out = np.zeros_like(points)
        if self._q.size == 0:
            return out

        scale = convention_factor(self.convention) / (4.0 * math.pi * EPSILON_0)
        for start in range(0, len(points), _COULOMB_CHUNK):
            chunk = points[start:start + _COULOMB_CHUNK]
            rx = chunk[:, None, 0] - self._sources[None, :, 0]
            ry = chunk[:, None, 1] - self._sources[None, :, 1]
            rz = np.broadcast_to(chunk[:, None, 2], rx.shape)
            inv_r3 = (rx * rx + ry * ry + rz * rz) ** -1.5
            weight = self._q[None, :] * inv_r3
            out[start:start + len(chunk)] = scale * np.stack(
                [(weight * rx).sum(axis=1), (weight * ry).sum(axis=1), (weight * rz).sum(axis=1)],
                axis=-1)
        return out


def coulomb_brute_force(charge: ChargeMap, point: Sequence[float]) -> np.ndarray:
    """Textbook Coulomb field of the charge map at a single point"""
    return CoulombOracleSampler(charge, FieldConvention.TEXTBOOK).field(point)


class FourierGridSampler(FieldSampler):
    """Half-space Fourier propagation of a charge map.

    The map is zero-padded along every axis on which it varies; axes along
    which it is constant are left periodic, which is exact for them. Fields at
    a height are obtained by inverse transform of the filtered spectrum,
    cropped to the map window and interpolated bilinearly. Planes are cached
    per height, bounded by ``numerics.plane_cache_mb``.
    """

    kind = "fourier_grid"

    def __init__(self, charge: ChargeMap, z: float,
                 convention: FieldConvention = FieldConvention.PAPER,
                 padding_factor: int = 2):
        super().__init__(convention)
        if not (z > 0) or not math.isfinite(z):
            raise ValidationError(f"Evaluation height must be positive, got {z}")
        if padding_factor < 1:
            raise ValidationError(f"Padding factor must be >= 1, got {padding_factor}")

        self.charge = charge
        self.z = float(z)
        uniform = charge.uniform_axes
        self.periodic_axes = uniform
        shape = tuple(n if periodic else n * padding_factor
                      for n, periodic in zip(charge.sigma.shape, uniform))
        self.padded_shape = shape

        padded = np.zeros(shape)
        padded[:charge.nx, :charge.ny] = charge.sigma
        self._spectrum = np.fft.fft2(padded)

        kx = 2.0 * math.pi * np.fft.fftfreq(shape[0], d=charge.dx)
        ky = 2.0 * math.pi * np.fft.fftfreq(shape[1], d=charge.dy)
        kx, ky = np.meshgrid(kx, ky, indexing="ij")
        k = np.hypot(kx, ky)
        safe_k = np.where(k > 0, k, 1.0)
        # the DC sheet carries no transverse field
        self._kx_factor = np.where(k > 0, -1j * kx / safe_k, 0.0)
        self._ky_factor = np.where(k > 0, -1j * ky / safe_k, 0.0)
        self._k = k
        self._scale = convention_factor(self.convention) / (2.0 * EPSILON_0)

        plane_bytes = 3 * charge.nx * charge.ny * np.dtype(float).itemsize
        budget = get_config_manager().get_plane_cache_mb() * 2 ** 20
        self.plane_cache_size = max(1, int(budget // plane_bytes))
        self._cached_plane = functools.lru_cache(maxsize=self.plane_cache_size)(self._plane)
        self._plane_ref = self._cached_plane(self.z)
        logger.debug("Fourier sampler built: grid %s padded to %s, z=%g m, %d cached planes",
                     charge.sigma.shape, shape, self.z, self.plane_cache_size)

    def _plane(self, z: float) -> np.ndarray:
        """(3, nx, ny) field on the map window at height z, read-only"""
        filtered = self._spectrum * np.exp(-self._k * z) * self._scale
        nx, ny = self.charge.nx, self.charge.ny
        components = [
            np.fft.ifft2(filtered * self._kx_factor).real[:nx, :ny],
            np.fft.ifft2(filtered * self._ky_factor).real[:nx, :ny],
            np.fft.ifft2(filtered).real[:nx, :ny],
        ]
        plane = np.stack(components)
        plane.setflags(write=False)
        return plane

    def plane_cache_info(self):
        """Hit/miss statistics of the per-height plane cache"""
        return self._cached_plane.cache_info()

    def grid_field(self) -> np.ndarray:
        """(3, nx, ny) field on the grid nodes at the construction height"""
        return self._plane_ref

    def _fractional_indices(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        fx = (points[:, 0] - self.charge.origin[0]) / self.charge.dx
        fy = (points[:, 1] - self.charge.origin[1]) / self.charge.dy
        tol = 1e-9
        for axis, (frac, n) in enumerate(((fx, self.charge.nx), (fy, self.charge.ny))):
            if self.periodic_axes[axis]:
                continue
            if np.any(frac < -tol) or np.any(frac > n - 1 + tol):
                raise DomainError(f"Point outside the charge-map window along {'xy'[axis]}")
        return fx, fy

    def _interpolate(self, plane: np.ndarray, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
        coords = np.vstack([fx, fy])
        return np.stack([ndimage.map_coordinates(component, coords, order=1, mode="nearest")
                         for component in plane], axis=-1)

    def _evaluate(self, points: np.ndarray) -> np.ndarray:
        if np.any(points[:, 2] <= 0):
            raise DomainError("Fourier sampler requires z > 0")
        fx, fy = self._fractional_indices(points)

        heights, inverse = np.unique(points[:, 2], return_inverse=True)
        groups = [np.flatnonzero(inverse == i) for i in range(len(heights))]

        def evaluate_height(item):
            height, index = item
            plane = self._cached_plane(float(height))
            return self._interpolate(plane, fx[index], fy[index])

        out = np.empty_like(points)
        results = parallel_map(evaluate_height, list(zip(heights, groups)))
        for index, values in zip(groups, results):
            out[index] = values
        return out


def fourier_stray_field(charge: ChargeMap, z: float,
                        convention: FieldConvention = FieldConvention.PAPER,
                        padding_factor: int = 2) -> FourierGridSampler:
    """Build the Fourier-propagated field sampler for a charge map at height z"""
    return FourierGridSampler(charge, z, convention, padding_factor)


def field_on_grid(sampler: FieldSampler, x: Iterable[float], y: Iterable[float],
                  z: float) -> np.ndarray:
    """Evaluate a sampler on the rectilinear grid x × y at height z; shape (3, nx, ny)"""
    xs, ys = np.meshgrid(np.asarray(x, dtype=float), np.asarray(y, dtype=float), indexing="ij")
    points = np.stack([xs, ys, np.full_like(xs, z)], axis=-1)
    return np.moveaxis(sampler.field(points), -1, 0)


def _grid_count(length: float, resolution: float) -> int:
    return int(round(length / resolution))


def make_striped_domains(period: float, sigma0: float, extent: float, resolution: float,
                         smoothing: float = 0.0) -> ChargeMap:
    """Antiparallel stripe domains: +-sigma0 stripes of width period/2 along x.

    The map is square (extent × extent), centered on the origin, uniform along y,
    with a +sigma0 stripe centered at x = 0. ``smoothing`` is the standard
    deviation of an optional Gaussian blur standing in for surface screening.
    """
    if not (0 < resolution < period / 4):
        raise ValidationError("Resolution must satisfy 0 < resolution < period/4")
    if not (extent >= period):
        raise ValidationError("Extent must be at least one period")
    if smoothing < 0:
        raise ValidationError("Smoothing must be non-negative")

    n = _grid_count(extent, resolution)
    x0 = -(n - 1) * resolution / 2.0
    x = x0 + resolution * np.arange(n)
    half = period / 2.0
    stripe_index = np.floor((x + period / 4.0) / half).astype(int)
    row = np.where(stripe_index % 2 == 0, sigma0, -sigma0).astype(float)
    sigma = np.repeat(row[:, None], n, axis=1)

    if smoothing > 0:
        # the pattern is uniform along y, so only x needs blurring
        sigma = ndimage.gaussian_filter1d(sigma, smoothing / resolution, axis=0, mode="nearest")

    return ChargeMap(sigma, resolution, resolution, (x0, x0))


def make_line_defect(lam: float, resolution: float, extent: float, ny: int = 2) -> ChargeMap:
    """Delta-line charge along y at x = 0: one column of density lam/resolution.

    The map is uniform along y, so ``ny`` only sets the y window; the Fourier
    solver treats that axis as periodic.
    """
    if not (resolution > 0):
        raise ValidationError("Resolution must be positive")
    if not (extent > 10 * resolution):
        raise ValidationError("Extent must exceed 10 grid cells")
    if ny < 2:
        raise ValidationError("ny must be at least 2")

    n = _grid_count(extent, resolution)
    if n % 2 == 0:
        n += 1
    center = n // 2
    sigma = np.zeros((n, ny))
    sigma[center, :] = lam / resolution
    return ChargeMap(sigma, resolution, resolution, (-center * resolution, 0.0))


@dataclass(frozen=True)
class BlobSpec:
    """Gaussian charge blob used to compose localized test samples"""
    x: float
    y: float
    width: float
    sigma0: float


def make_gaussian_blobs(blobs: Sequence[BlobSpec], n: int, resolution: float) -> ChargeMap:
    """Square map (n × n, centered on the origin) holding a sum of Gaussian blobs"""
    if n < 2 or not (resolution > 0):
        raise ValidationError("Blob map needs n >= 2 and a positive resolution")
    x0 = -(n - 1) * resolution / 2.0
    coords = x0 + resolution * np.arange(n)
    xs, ys = np.meshgrid(coords, coords, indexing="ij")
    sigma = np.zeros((n, n))
    for blob in blobs:
        if not (blob.width > 0):
            raise ValidationError("Blob width must be positive")
        sigma += blob.sigma0 * np.exp(-((xs - blob.x) ** 2 + (ys - blob.y) ** 2)
                                      / (2.0 * blob.width ** 2))
    return ChargeMap(sigma, resolution, resolution, (x0, x0))


def zero_charge(n: int, resolution: float) -> ChargeMap:
    """All-zero square map centered on the origin"""
    x0 = -(n - 1) * resolution / 2.0
    return ChargeMap(np.zeros((n, n)), resolution, resolution, (x0, x0))


def describe(charge: ChargeMap) -> str:
    ux, uy = charge.uniform_axes
    return (f"ChargeMap {charge.nx}x{charge.ny}, pitch {charge.dx:g} x {charge.dy:g} m, "
            f"origin ({charge.origin[0]:g}, {charge.origin[1]:g}), "
            f"uniform along x={ux}, y={uy}")


def validate_height(z: float, name: str = "z") -> float:
    if not (z > 0) or not math.isfinite(z):
        raise ValidationError(f"{name} must be a positive finite height, got {z}")
    return float(z)


def default_sampler_for(charge: ChargeMap, z: float,
                        convention: FieldConvention = FieldConvention.PAPER,
                        padding_factor: Optional[int] = None) -> FieldSampler:
    """Fourier sampler with the configured padding factor"""
    if padding_factor is None:
        padding_factor = int(get_config_manager().get("numerics.fft_padding_factor"))
    return fourier_stray_field(charge, validate_height(z), convention, padding_factor)
