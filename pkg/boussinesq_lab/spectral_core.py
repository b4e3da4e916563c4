"""
Periodic grid, spectral transforms, dealiasing and the Biot-Savart law

The plane is truncated to the torus [-L/2, L/2)^2 sampled on an n x n grid
with ``values[i1, i2] = f(-L/2 + i1*dx, -L/2 + i2*dx)``. Spectra use the
real-to-complex layout of ``scipy.fft.rfft2``: axis 0 runs over the full
set of wavenumbers ``2*pi*fftfreq(n, dx)``, axis 1 over the non-negative
half ``2*pi*rfftfreq(n, dx)``.
"""

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .constants import (
    DEFAULT_DEALIAS_FRACTION,
    DEFAULT_LENGTH,
    DEFAULT_N,
    MIN_GRID_POINTS,
    TAIL_BAND_START,
)
from .exceptions import ConfigurationError, DomainError


@dataclass(frozen=True)
class GridSpec:
    """Square periodic grid

    Attributes:
        n: Points per axis, a power of two, at least 16
        length: Torus side L
        dealias_fraction: Fraction of the Nyquist mode index that is retained

    Example:
        >>> grid = GridSpec(n=256)
        >>> round(grid.dx, 4)
        0.0982
    """

    n: int = DEFAULT_N
    length: float = DEFAULT_LENGTH
    dealias_fraction: float = DEFAULT_DEALIAS_FRACTION

    def __post_init__(self):
        violations = []
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)):
            violations.append(f"grid.n must be an integer, got {self.n!r}")
        elif self.n < MIN_GRID_POINTS:
            violations.append(f"grid.n = {self.n} below the minimum {MIN_GRID_POINTS}")
        elif self.n & (self.n - 1):
            violations.append(f"grid.n = {self.n} is not a power of two")
        if not (math.isfinite(self.length) and self.length > 0):
            violations.append(f"grid.length = {self.length} must be positive")
        if not 0.0 < self.dealias_fraction <= 1.0:
            violations.append(f"grid.dealias_fraction = {self.dealias_fraction} outside (0, 1]")
        if violations:
            raise ConfigurationError("invalid grid", violations)

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def cell_area(self) -> float:
        return self.dx * self.dx

    @property
    def nyquist(self) -> float:
        """Largest wavenumber along an axis, pi/dx"""
        return math.pi / self.dx

    @property
    def axis(self) -> np.ndarray:
        return -0.5 * self.length + self.dx * np.arange(self.n)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return (x1, x2) sample coordinates with 'ij' indexing"""
        return _coordinates(self)

    def points(self) -> np.ndarray:
        """All grid points as an (n*n, 2) array in row-major order"""
        x1, x2 = self.coordinates()
        return np.column_stack([x1.ravel(), x2.ravel()])

    def to_index(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Fractional grid indices of physical points (not wrapped)"""
        points = np.asarray(points, dtype=np.float64)
        offset = 0.5 * self.length
        return (points[..., 0] + offset) / self.dx, (points[..., 1] + offset) / self.dx

    def min_image(self, d: np.ndarray) -> np.ndarray:
        """Minimum-image representative of a displacement on the torus"""
        return d - self.length * np.round(d / self.length)


@lru_cache(maxsize=16)
def _coordinates(grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    x1, x2 = np.meshgrid(grid.axis, grid.axis, indexing="ij")
    x1.setflags(write=False)
    x2.setflags(write=False)
    return x1, x2


@dataclass(frozen=True, eq=False)
class SpectralOperators:
    """Wavenumber arrays and masks shared by every spectral operation

    ``k1_odd``/``k2_odd`` zero the Nyquist wavenumber so first derivatives of
    real fields stay real. ``inverse_laplacian`` is zero on the mean and on
    the Nyquist lines.
    """

    k1: np.ndarray
    k2: np.ndarray
    k1_odd: np.ndarray
    k2_odd: np.ndarray
    ksq: np.ndarray
    kmag: np.ndarray
    inverse_laplacian: np.ndarray
    nyquist_mask: np.ndarray
    mode_index: np.ndarray
    cutoff: float
    dealias_mask: np.ndarray
    half_weights: np.ndarray


@lru_cache(maxsize=16)
def spectral_operators(grid: GridSpec) -> SpectralOperators:
    """Build (once per grid) the wavenumber arrays for ``grid``"""
    n = grid.n
    k1 = (2.0 * np.pi * sfft.fftfreq(n, d=grid.dx))[:, None]
    k2 = (2.0 * np.pi * sfft.rfftfreq(n, d=grid.dx))[None, :]
    m1 = np.rint(sfft.fftfreq(n) * n).astype(np.int64)[:, None]
    m2 = np.rint(sfft.rfftfreq(n) * n).astype(np.int64)[None, :]
    nyq1 = m1 == -(n // 2)
    nyq2 = m2 == n // 2
    k1_odd = np.where(nyq1, 0.0, k1)
    k2_odd = np.where(nyq2, 0.0, k2)
    ksq = k1**2 + k2**2
    nyquist_mask = nyq1 | nyq2
    zero = (m1 == 0) & (m2 == 0)
    with np.errstate(divide="ignore"):
        inverse_laplacian = np.where(zero | nyquist_mask, 0.0, 1.0 / np.where(zero, 1.0, ksq))
    mode_index = np.maximum(np.abs(m1), np.abs(m2))
    cutoff = grid.dealias_fraction * (n // 2)
    half_weights = np.where((m2 == 0) | nyq2, 1.0, 2.0) * np.ones_like(ksq)
    return SpectralOperators(
        k1=k1,
        k2=k2,
        k1_odd=k1_odd,
        k2_odd=k2_odd,
        ksq=ksq,
        kmag=np.sqrt(ksq),
        inverse_laplacian=inverse_laplacian,
        nyquist_mask=nyquist_mask,
        mode_index=mode_index,
        cutoff=cutoff,
        dealias_mask=mode_index <= cutoff,
        half_weights=half_weights,
    )


Scalar = Union[int, float, np.floating]


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Immutable grid sample of a real scalar with a lazily cached spectrum

    ``values`` is a read-only copy of the constructor input, so the cached
    spectrum can never go stale.

    Attributes:
        grid: Grid the samples live on
        values: n x n float64 samples
    """

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.shape != (self.grid.n, self.grid.n):
            raise ConfigurationError(
                "field does not match grid",
                [f"values shape {values.shape} != ({self.grid.n}, {self.grid.n})"],
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @cached_property
    def spectrum(self) -> np.ndarray:
        spec = sfft.rfft2(self.values)
        spec.setflags(write=False)
        return spec

    @classmethod
    def from_spectrum(cls, grid: GridSpec, spectrum: np.ndarray) -> "ScalarField":
        return cls(grid, sfft.irfft2(spectrum, s=(grid.n, grid.n)))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros((grid.n, grid.n)))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "ScalarField":
        return cls(grid, np.full((grid.n, grid.n), float(value)))

    @classmethod
    def from_function(
        cls, grid: GridSpec, func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    ) -> "ScalarField":
        """Sample ``func(x1, x2)`` on the grid

        Example:
            >>> f = ScalarField.from_function(grid, lambda x1, x2: np.sin(x1))
        """
        x1, x2 = grid.coordinates()
        return cls(grid, np.broadcast_to(func(x1, x2), (grid.n, grid.n)))

    def _other(self, other: Union["ScalarField", Scalar]) -> Union[np.ndarray, float]:
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ConfigurationError("fields live on different grids")
            return other.values
        return float(other)

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar):
        return ScalarField(self.grid, self.values / float(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def lp_norm(self, p: float) -> float:
        """Torus L^p norm with equal-weight quadrature; p = inf is the grid max"""
        if math.isinf(p):
            return self.max_abs()
        return float((np.sum(np.abs(self.values) ** p) * self.grid.cell_area) ** (1.0 / p))

    def la_linf_norm(self, a: float) -> float:
        """Norm of L^a ∩ L^inf, taken as the sum of the two norms"""
        return self.lp_norm(a) + self.lp_norm(math.inf)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_area)

    def mean(self) -> float:
        return float(np.mean(self.values))

    def spectral_l2_norm(self) -> float:
        """L^2 norm computed from the spectrum (Parseval)"""
        ops = spectral_operators(self.grid)
        energy = np.sum(ops.half_weights * np.abs(self.spectrum) ** 2)
        return float(math.sqrt(energy * self.grid.cell_area) / self.grid.n)


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Pair of components of a planar vector field

    Attributes:
        u1, u2: Components
        provenance: 'biot_savart' for fields recovered from vorticity,
            'explicit' otherwise
    """

    u1: ScalarField
    u2: ScalarField
    provenance: str = "explicit"

    @property
    def grid(self) -> GridSpec:
        return self.u1.grid

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u1.values, self.u2.values)

    def max_speed(self) -> float:
        return float(np.max(self.magnitude()))

    def l2_norm(self) -> float:
        return float(math.sqrt(np.sum(self.magnitude() ** 2) * self.grid.cell_area))

    def divergence(self) -> ScalarField:
        ops = spectral_operators(self.grid)
        spec = 1j * ops.k1_odd * self.u1.spectrum + 1j * ops.k2_odd * self.u2.spectrum
        return ScalarField.from_spectrum(self.grid, spec)

    def curl(self) -> ScalarField:
        """Scalar curl d1 u2 - d2 u1"""
        ops = spectral_operators(self.grid)
        spec = 1j * ops.k1_odd * self.u2.spectrum - 1j * ops.k2_odd * self.u1.spectrum
        return ScalarField.from_spectrum(self.grid, spec)

    def gradient(self) -> np.ndarray:
        """Jacobian samples G[i, j] = d_j u_i with shape (2, 2, n, n)"""
        ops = spectral_operators(self.grid)
        grad = np.empty((2, 2, self.grid.n, self.grid.n))
        for i, comp in enumerate((self.u1, self.u2)):
            for j, k in enumerate((ops.k1_odd, ops.k2_odd)):
                grad[i, j] = sfft.irfft2(1j * k * comp.spectrum, s=(self.grid.n, self.grid.n))
        return grad

    def gradient_norm(self) -> np.ndarray:
        """Pointwise Frobenius norm of the Jacobian"""
        grad = self.gradient()
        return np.sqrt(np.sum(grad**2, axis=(0, 1)))

    def __neg__(self) -> "VelocityField":
        return VelocityField(-self.u1, -self.u2, self.provenance)


def biot_savart(omega: ScalarField) -> VelocityField:
    """Recover the divergence-free velocity with curl ``omega``

    v̂ = i ξ^⊥ ω̂ / |ξ|^2 with ξ^⊥ = (-ξ2, ξ1), i.e.
    v̂1 = i ξ2 ω̂/|ξ|^2 and v̂2 = -i ξ1 ω̂/|ξ|^2. The mean vorticity and the
    Nyquist lines are projected out.

    Example:
        >>> biot_savart(ScalarField.zeros(grid)).max_speed()
        0.0
    """
    grid = omega.grid
    ops = spectral_operators(grid)
    stream = ops.inverse_laplacian * omega.spectrum
    u1 = ScalarField.from_spectrum(grid, 1j * ops.k2_odd * stream)
    u2 = ScalarField.from_spectrum(grid, -1j * ops.k1_odd * stream)
    return VelocityField(u1, u2, provenance="biot_savart")


def spectral_derivative(f: ScalarField, axis: int) -> ScalarField:
    """Return d f / d x_axis (axis 1 or 2) by multiplication with i ξ_axis"""
    if axis not in (1, 2):
        raise DomainError(f"axis must be 1 or 2, got {axis}")
    ops = spectral_operators(f.grid)
    k = ops.k1_odd if axis == 1 else ops.k2_odd
    return ScalarField.from_spectrum(f.grid, 1j * k * f.spectrum)


def gradient(f: ScalarField) -> Tuple[ScalarField, ScalarField]:
    return spectral_derivative(f, 1), spectral_derivative(f, 2)


def dealias(f: ScalarField) -> ScalarField:
    """Zero every mode with max(|m1|, |m2|) above the dealias cutoff"""
    ops = spectral_operators(f.grid)
    return ScalarField.from_spectrum(f.grid, np.where(ops.dealias_mask, f.spectrum, 0.0))


def leray_project(v: VelocityField) -> VelocityField:
    """Divergence-free part of ``v`` (spectral Leray projection)"""
    grid = v.grid
    ops = spectral_operators(grid)
    ksq_odd = ops.k1_odd**2 + ops.k2_odd**2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(ksq_odd > 0.0, 1.0 / ksq_odd, 0.0)
    s1, s2 = v.u1.spectrum, v.u2.spectrum
    div = (ops.k1_odd * s1 + ops.k2_odd * s2) * inv
    return VelocityField(
        ScalarField.from_spectrum(grid, s1 - ops.k1_odd * div),
        ScalarField.from_spectrum(grid, s2 - ops.k2_odd * div),
        provenance=v.provenance,
    )


def gaussian_mollify(f: ScalarField, width: float) -> ScalarField:
    """Convolve with a Gaussian of standard deviation width/2 (spectrally)"""
    ops = spectral_operators(f.grid)
    sigma = 0.5 * width
    return ScalarField.from_spectrum(f.grid, f.spectrum * np.exp(-0.5 * sigma**2 * ops.ksq))


def spectral_tail_fraction(f: ScalarField) -> float:
    """Energy fraction in the outer band of the retained modes

    The band is TAIL_BAND_START * cutoff < max(|m1|, |m2|) <= cutoff. A value
    above 1e-6 means the field is close to losing resolution.
    """
    ops = spectral_operators(f.grid)
    energy = ops.half_weights * np.abs(f.spectrum) ** 2
    total = float(np.sum(energy))
    if total == 0.0:
        return 0.0
    band = (ops.mode_index > TAIL_BAND_START * ops.cutoff) & ops.dealias_mask
    return float(np.sum(energy[band]) / total)


class PeriodicInterpolator:
    """Cubic-spline evaluation of a grid function at arbitrary points

    Coefficients are prefiltered once; evaluation wraps periodically, so
    points may lie anywhere in the plane.

    Example:
        >>> interp = PeriodicInterpolator(field)
        >>> interp(np.array([[0.1, -0.3], [12.0, 4.0]]))
    """

    def __init__(
        self, field: Union[ScalarField, np.ndarray], grid: Optional[GridSpec] = None, order: int = 3
    ):
        if isinstance(field, ScalarField):
            grid, values = field.grid, field.values
        else:
            values = np.asarray(field, dtype=np.float64)
        if grid is None:
            raise ValueError("grid is required for raw arrays")
        self.grid = grid
        self.order = order
        self.coefficients = ndimage.spline_filter(values, order=order, mode="grid-wrap")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        i1, i2 = self.grid.to_index(points)
        flat = ndimage.map_coordinates(
            self.coefficients,
            [i1.ravel(), i2.ravel()],
            order=self.order,
            mode="grid-wrap",
            prefilter=False,
        )
        return flat.reshape(points.shape[:-1])
