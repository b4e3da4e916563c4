"""
Initial data, frame families and boundary diagnostics for vortex patches

A patch is the Gaussian-mollified indicator of a shape. Shapes with a
closed-form Fourier transform (disc, ellipse, square) are mollified exactly
in spectral space, so the vorticity mass equals the area up to round-off.
Densities are built so that they are exactly constant (bit-identical) on
the plateau around the singular set.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special
from scipy.integrate import cumulative_trapezoid
from skimage import measure

from .constants import (
    ANTIALIAS_SUPERSAMPLE,
    DEFAULT_CONTOUR_POINTS,
    DEFAULT_EPS,
    DEFAULT_MOLLIFY_CELLS,
    DEFAULT_PLATEAU_RADIUS,
)
from .dyadic_analyzer import (
    directional_derivative,
    distance_to_points,
    family_nondegeneracy,
    family_regularity,
    holder_norm,
    inflate,
    masked_sup_profile,
    validate_scales,
)
from .exceptions import (
    ConfigurationError,
    ConstructionError,
    DegeneracyError,
    InsufficientDataError,
)
from .flow_transport import FrameFamily
from .logger import logger
from .profiles import ramp_down, ramp_down_derivative, smooth_step, smooth_step_derivative
from .report import CheckReport, CheckRow
from .spectral_core import (
    GridSpec,
    PeriodicInterpolator,
    ScalarField,
    VelocityField,
    gaussian_mollify,
    spectral_derivative,
    spectral_operators,
)

Array = np.ndarray

# level functions are cut off between these multiples of the shape scale
LEVEL_CUTOFF = (1.6, 2.2)


def resample_closed(points: Array, count: int) -> Array:
    """Resample a closed polyline to ``count`` points equally spaced in arclength"""
    points = np.asarray(points, dtype=np.float64)
    if np.allclose(points[0], points[-1]):
        points = points[:-1]
    closed = np.vstack([points, points[:1]])
    seg = np.hypot(*np.diff(closed, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, s[-1], count, endpoint=False)
    return np.column_stack([np.interp(target, s, closed[:, 0]), np.interp(target, s, closed[:, 1])])


def arclength(points: Array) -> float:
    closed = np.vstack([points, points[:1]])
    return float(np.sum(np.hypot(*np.diff(closed, axis=0).T)))


class Shape:
    """Base class of patch shapes

    Subclasses provide the level function f0 (positive inside, compactly
    supported), its analytic gradient, a boundary distance, a boundary
    parametrization and, when available, the Fourier transform of the
    indicator.
    """

    kind = "shape"
    corners: Array = np.zeros((0, 2))

    @property
    def scale(self) -> float:
        raise NotImplementedError

    @property
    def bounding_radius(self) -> float:
        raise NotImplementedError

    def base(self, x1: Array, x2: Array) -> Tuple[Array, Array, Array]:
        """Uncut level function and its gradient"""
        raise NotImplementedError

    def radius(self, x1: Array, x2: Array) -> Tuple[Array, Array, Array]:
        """Normalized radius driving the compact cutoff, and its gradient"""
        r = np.hypot(x1, x2)
        safe = np.where(r > 0.0, r, 1.0)
        return r / self.scale, x1 / safe / self.scale, x2 / safe / self.scale

    def level(self, x1: Array, x2: Array) -> Array:
        return self.level_and_gradient(x1, x2)[0]

    def level_and_gradient(self, x1: Array, x2: Array) -> Tuple[Array, Array, Array]:
        b, b1, b2 = self.base(x1, x2)
        rho, r1, r2 = self.radius(x1, x2)
        inner, outer = LEVEL_CUTOFF
        cut = ramp_down(rho, inner, outer)
        dcut = ramp_down_derivative(rho, inner, outer)
        return b * cut, b1 * cut + b * dcut * r1, b2 * cut + b * dcut * r2

    def boundary_distance(self, x1: Array, x2: Array) -> Array:
        raise NotImplementedError

    def contour(self, count: int) -> Array:
        raise NotImplementedError

    def area(self) -> float:
        raise NotImplementedError

    def indicator_transform(self, k1: Array, k2: Array) -> Optional[Array]:
        """Fourier transform of the indicator at wavenumbers (k1, k2), or None"""
        return None


class Disc(Shape):
    kind = "disc"

    def __init__(self, radius: float = 1.0, center: Sequence[float] = (0.0, 0.0)):
        if radius <= 0.0:
            raise ConfigurationError("invalid disc", [f"patch.radius = {radius} must be positive"])
        self.R = float(radius)
        self.center = np.asarray(center, dtype=np.float64)

    @property
    def scale(self) -> float:
        return self.R

    @property
    def bounding_radius(self) -> float:
        return float(np.hypot(*self.center)) + self.R

    def radius(self, x1, x2):
        return super().radius(x1 - self.center[0], x2 - self.center[1])

    def base(self, x1, x2):
        y1, y2 = x1 - self.center[0], x2 - self.center[1]
        return 1.0 - (y1**2 + y2**2) / self.R**2, -2.0 * y1 / self.R**2, -2.0 * y2 / self.R**2

    def boundary_distance(self, x1, x2):
        return np.abs(np.hypot(x1 - self.center[0], x2 - self.center[1]) - self.R)

    def contour(self, count):
        angle = 2.0 * np.pi * np.arange(count) / count
        return self.center + self.R * np.column_stack([np.cos(angle), np.sin(angle)])

    def area(self):
        return math.pi * self.R**2

    def indicator_transform(self, k1, k2):
        k = np.hypot(k1, k2) * self.R
        safe = np.where(k > 0.0, k, 1.0)
        profile = np.where(k > 0.0, 2.0 * special.j1(safe) / safe, 1.0)
        return self.area() * profile * np.exp(-1j * (k1 * self.center[0] + k2 * self.center[1]))


class Ellipse(Shape):
    kind = "ellipse"

    def __init__(self, a: float = 1.0, b: float = 0.5, angle: float = 0.0):
        violations = [
            f"patch.{n} = {v} must be positive" for n, v in (("a", a), ("b", b)) if v <= 0
        ]
        if violations:
            raise ConfigurationError("invalid ellipse", violations)
        self.a, self.b, self.angle = float(a), float(b), float(angle)
        self._c, self._s = math.cos(angle), math.sin(angle)

    @property
    def scale(self) -> float:
        return max(self.a, self.b)

    @property
    def bounding_radius(self) -> float:
        return self.scale

    def _rotate(self, x1, x2):
        return self._c * x1 + self._s * x2, -self._s * x1 + self._c * x2

    def base(self, x1, x2):
        y1, y2 = self._rotate(x1, x2)
        g1, g2 = -2.0 * y1 / self.a**2, -2.0 * y2 / self.b**2
        # back to lab frame
        level = 1.0 - (y1 / self.a) ** 2 - (y2 / self.b) ** 2
        return level, self._c * g1 - self._s * g2, self._s * g1 + self._c * g2

    def boundary_distance(self, x1, x2):
        b, b1, b2 = self.base(x1, x2)
        return np.abs(b) / np.maximum(np.hypot(b1, b2), 1e-300)

    def contour(self, count):
        fine = 16 * count
        angle = 2.0 * np.pi * np.arange(fine + 1) / fine
        speed = np.hypot(self.a * np.sin(angle), self.b * np.cos(angle))
        s = cumulative_trapezoid(speed, angle, initial=0.0)
        target = np.linspace(0.0, s[-1], count, endpoint=False)
        t = np.interp(target, s, angle)
        y1, y2 = self.a * np.cos(t), self.b * np.sin(t)
        return np.column_stack([self._c * y1 - self._s * y2, self._s * y1 + self._c * y2])

    def area(self):
        return math.pi * self.a * self.b

    def indicator_transform(self, k1, k2):
        q1, q2 = self._rotate(k1, k2)
        k = np.hypot(self.a * q1, self.b * q2)
        safe = np.where(k > 0.0, k, 1.0)
        return self.area() * np.where(k > 0.0, 2.0 * special.j1(safe) / safe, 1.0)


class Square(Shape):
    """Axis-aligned square [-s, s]^2; the four corners form the singular set

    The level function (s^2 - x1^2)(s^2 - x2^2)/s^2 has a gradient vanishing
    linearly at the corners (tangency order 1).
    """

    kind = "square"

    def __init__(self, half_side: float = 1.0):
        if half_side <= 0.0:
            raise ConfigurationError(
                "invalid square", [f"patch.half_side = {half_side} must be positive"]
            )
        self.s = float(half_side)
        self.corners = self.s * np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]])

    @property
    def scale(self) -> float:
        return self.s

    @property
    def bounding_radius(self) -> float:
        return math.sqrt(2.0) * self.s

    def base(self, x1, x2):
        s2 = self.s**2
        a, b = s2 - x1**2, s2 - x2**2
        return a * b / s2, -2.0 * x1 * b / s2, -2.0 * x2 * a / s2

    def boundary_distance(self, x1, x2):
        d1, d2 = np.abs(x1) - self.s, np.abs(x2) - self.s
        outside = np.hypot(np.maximum(d1, 0.0), np.maximum(d2, 0.0))
        inside = np.minimum(-d1, -d2)
        return np.where((d1 > 0.0) | (d2 > 0.0), outside, inside)

    def contour(self, count):
        return resample_closed(np.vstack([self.corners, self.corners[:1]]), count)

    def area(self):
        return 4.0 * self.s**2

    def indicator_transform(self, k1, k2):
        return self.area() * np.sinc(k1 * self.s / np.pi) * np.sinc(k2 * self.s / np.pi)


class LevelSetShape(Shape):
    """Patch {f0 > 0} for a user level function

    The indicator is antialiased by supersampling and mollified spectrally;
    the contour comes from marching squares on the sampled level function.
    """

    kind = "custom_levelset"

    def __init__(
        self,
        func: Callable[[Array, Array], Array],
        grad: Optional[Callable[[Array, Array], Tuple[Array, Array]]] = None,
        corners: Optional[Array] = None,
        scale: float = 1.0,
        grid: Optional[GridSpec] = None,
    ):
        self.func = func
        self.grad = grad
        self.corners = np.zeros((0, 2)) if corners is None else np.asarray(corners, float)
        self.corners = self.corners.reshape(-1, 2)
        self._scale = scale
        self.grid = grid

    @property
    def scale(self) -> float:
        return self._scale

    @property
    def bounding_radius(self) -> float:
        if self.grid is None:
            return self._scale
        x1, x2 = self.grid.coordinates()
        inside = self.func(x1, x2) > 0.0
        return float(np.max(np.hypot(x1, x2)[inside])) if inside.any() else 0.0

    def level_and_gradient(self, x1, x2):
        f = self.func(x1, x2)
        if self.grad is not None:
            g1, g2 = self.grad(x1, x2)
            return f, g1, g2
        if self.grid is None:
            raise ConstructionError("custom level set without gradient needs a grid")
        field_ = ScalarField(self.grid, f)
        return f, spectral_derivative(field_, 1).values, spectral_derivative(field_, 2).values

    def boundary_distance(self, x1, x2):
        f, g1, g2 = self.level_and_gradient(x1, x2)
        return np.abs(f) / np.maximum(np.hypot(g1, g2), 1e-300)

    def contour(self, count):
        if self.grid is None:
            raise ConstructionError("custom level set contour needs a grid")
        x1, x2 = self.grid.coordinates()
        level = ScalarField(self.grid, self.func(x1, x2))
        return resample_closed(extract_contour(level, 0.0), count)

    def area(self):
        if self.grid is None:
            raise ConstructionError("custom level set area needs a grid")
        return float(supersampled_indicator(self.func, self.grid).sum() * self.grid.cell_area)


def make_shape(kind: str, params: Dict[str, Any], grid: Optional[GridSpec] = None) -> Shape:
    if kind == "disc":
        return Disc(params.get("radius", 1.0), params.get("center", (0.0, 0.0)))
    if kind == "ellipse":
        return Ellipse(params.get("a", 1.0), params.get("b", 0.5), params.get("angle", 0.0))
    if kind == "square":
        return Square(params.get("half_side", 1.0))
    if kind == "custom_levelset":
        if "level" not in params:
            raise ConfigurationError("invalid custom patch", ["patch.level function is required"])
        return LevelSetShape(
            params["level"],
            params.get("gradient"),
            params.get("corners"),
            params.get("scale", 1.0),
            grid,
        )
    raise ConfigurationError(
        "invalid patch",
        [f"patch.kind = {kind!r} is not one of disc, ellipse, square, custom_levelset"],
    )


def supersampled_indicator(func: Callable[[Array, Array], Array], grid: GridSpec) -> Array:
    """Cell-averaged indicator of {func > 0} with ANTIALIAS_SUPERSAMPLE^2 samples per cell"""
    x1, x2 = grid.coordinates()
    m = ANTIALIAS_SUPERSAMPLE
    offsets = (np.arange(m) + 0.5) / m - 0.5
    acc = np.zeros_like(x1)
    for o1 in offsets:
        for o2 in offsets:
            acc += func(x1 + o1 * grid.dx, x2 + o2 * grid.dx) > 0.0
    return acc / (m * m)


def mollified_indicator(shape: Shape, grid: GridSpec, width: float) -> ScalarField:
    """Indicator convolved with a Gaussian of standard deviation width/2

    Exact in spectral space when the shape has a closed-form transform.
    """
    ops = spectral_operators(grid)
    transform = shape.indicator_transform(ops.k1, ops.k2)
    if transform is None:
        raw = ScalarField(grid, supersampled_indicator(shape.level, grid))
        return gaussian_mollify(raw, width)
    sigma = 0.5 * width
    m1 = np.rint(ops.k1 * grid.length / (2.0 * np.pi))
    m2 = np.rint(ops.k2 * grid.length / (2.0 * np.pi))
    parity = np.where((m1 + m2) % 2 == 0, 1.0, -1.0)
    spectrum = (grid.n / grid.length) ** 2 * transform * parity * np.exp(-0.5 * sigma**2 * ops.ksq)
    return ScalarField.from_spectrum(grid, spectrum)


def theta_cutoff(distance: Array, h: float) -> Array:
    """theta_h = 0 on dist < h/2, 1 on dist >= h, smooth in between"""
    return smooth_step((distance - 0.5 * h) / (0.5 * h))


def theta_cutoff_derivative(distance: Array, h: float) -> Array:
    return smooth_step_derivative((distance - 0.5 * h) / (0.5 * h)) / (0.5 * h)


def _nearest_point_vectors(grid: GridSpec, points: Array) -> Tuple[Array, Array, Array]:
    """Distance to the nearest point and the minimum-image displacement to it"""
    x1, x2 = grid.coordinates()
    best = np.full(x1.shape, np.inf)
    d1 = np.zeros_like(x1)
    d2 = np.zeros_like(x2)
    for p1, p2 in np.asarray(points, dtype=np.float64).reshape(-1, 2):
        e1, e2 = grid.min_image(x1 - p1), grid.min_image(x2 - p2)
        dist = np.hypot(e1, e2)
        closer = dist < best
        best = np.where(closer, dist, best)
        d1 = np.where(closer, e1, d1)
        d2 = np.where(closer, e2, d2)
    return best, d1, d2


def density_profile(
    profile: str,
    grid: GridSpec,
    amplitude: float,
    singular_set: Array,
    plateau_radius: float,
    support_radius: float,
) -> ScalarField:
    """Initial density

    Profiles:
        zero: 0
        constant: amplitude
        linear: amplitude * x2 * T(|x|), T a compact radial taper
        banded: amplitude * q(x2) * T(|x|), q saturating to +-1 on the bands
            containing the singular points' plateaus
        tapered: linear, blended to its value at each singular point on
            the disc of radius plateau_radius around it
    """
    x1, x2 = grid.coordinates()
    r = np.hypot(x1, x2)
    outer = min(3.0 * support_radius, 0.45 * grid.length)
    inner = min(2.0 * support_radius, 0.3 * grid.length)
    taper = ramp_down(r, inner, outer)
    singular_set = np.asarray(singular_set, dtype=np.float64).reshape(-1, 2)

    if profile == "zero":
        values = np.zeros_like(x1)
    elif profile == "constant":
        values = np.full_like(x1, amplitude)
    elif profile == "linear":
        values = amplitude * x2 * taper
    elif profile == "banded":
        values = amplitude * _banded(x2, singular_set, plateau_radius) * taper
    elif profile == "tapered":
        values = _tapered(grid, amplitude * x2 * taper, singular_set, plateau_radius)
    else:
        raise ConfigurationError(
            "invalid density",
            [
                f"density.profile = {profile!r} is not one of"
                " zero, constant, linear, banded, tapered"
            ],
        )
    return ScalarField(grid, values)


def _banded(x2: Array, singular_set: Array, r: float) -> Array:
    if singular_set.shape[0] == 0:
        return np.tanh(x2)
    edge = float(np.min(np.abs(singular_set[:, 1]))) - 1.05 * r
    if edge <= 0.0:
        raise ConfigurationError(
            "invalid density",
            [
                "density.profile = banded needs every plateau disc outside the central band;"
                " use tapered"
            ],
        )
    return 2.0 * smooth_step((x2 + edge) / (2.0 * edge)) - 1.0


def _tapered(grid: GridSpec, base: Array, singular_set: Array, r: float) -> Array:
    if singular_set.shape[0] == 0:
        return base
    if singular_set.shape[0] > 1:
        gaps = [
            math.hypot(*(p - q))
            for i, p in enumerate(singular_set)
            for q in singular_set[i + 1 :]
        ]
        if min(gaps) <= 4.0 * r:
            raise ConfigurationError(
                "invalid density", [f"plateaus of radius {r} around the singular set overlap"]
            )
    interp = PeriodicInterpolator(ScalarField(grid, base))
    values = interp(singular_set)
    blended = base.copy()
    for p, value in zip(singular_set, values):
        weight = ramp_down(distance_to_points(grid, p[None, :]), r, 2.0 * r)
        blended = np.where(weight == 1.0, value, (1.0 - weight) * blended + weight * value)
    return blended


@dataclass
class PatchSpec:
    """Everything that defines an initial patch

    Attributes:
        kind: disc, ellipse, square or custom_levelset
        shape: The Shape object
        grid: Grid the fields live on
        level_fn: f0 sampled on the grid
        contour: Closed boundary polyline resampled to arclength
        singular_set: Sigma_0, possibly empty
        mollify_width: eta
        amplitude: delta_rho
        plateau_radius: r
        profile: Density profile id
        tangency_order: gamma~_0 of hypothesis (H)
        omega0: Mollified indicator
        rho0: Density before dealiasing
        tube_width: Width of the tubular neighbourhood V_0
        plateau_seeds: Points sampling (Sigma_0)_{r/2}
    """

    kind: str
    shape: Shape
    grid: GridSpec
    level_fn: ScalarField
    contour: Array
    singular_set: Array
    mollify_width: float
    amplitude: float
    plateau_radius: float
    profile: str
    tangency_order: float
    omega0: ScalarField
    rho0: ScalarField
    tube_width: float
    plateau_seeds: Array = field(default_factory=lambda: np.zeros((0, 2)))

    @property
    def is_singular(self) -> bool:
        return self.singular_set.shape[0] > 0

    @property
    def singular_slice(self) -> slice:
        return slice(0, self.singular_set.shape[0])

    @property
    def contour_slice(self) -> slice:
        start = self.singular_set.shape[0]
        return slice(start, start + self.contour.shape[0])

    @property
    def plateau_slice(self) -> slice:
        start = self.contour_slice.stop
        return slice(start, start + self.plateau_seeds.shape[0])

    def tracers(self) -> Array:
        return np.vstack([self.singular_set, self.contour, self.plateau_seeds])

    def level_gradient(self) -> Tuple[Array, Array]:
        x1, x2 = self.grid.coordinates()
        _, g1, g2 = self.shape.level_and_gradient(x1, x2)
        return g1, g2

    def tube_cutoff(self) -> Array:
        """alpha~: 1 on the inner half of the tube V_0 around the boundary, 0 outside it"""
        x1, x2 = self.grid.coordinates()
        distance = self.shape.boundary_distance(x1, x2)
        return ramp_down(distance, 0.5 * self.tube_width, self.tube_width)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "singular_set": self.singular_set.tolist(),
            "mollify_width": self.mollify_width,
            "amplitude": self.amplitude,
            "plateau_radius": self.plateau_radius,
            "profile": self.profile,
            "tangency_order": self.tangency_order,
            "tube_width": self.tube_width,
            "contour_points": int(self.contour.shape[0]),
            "area": self.shape.area(),
        }


def plateau_seed_points(
    singular_set: Array, radius: float, rings: int = 4, per_ring: int = 16
) -> Array:
    """Polar sample of the discs of radius ``radius`` around each singular point"""
    seeds = []
    angle = 2.0 * np.pi * np.arange(per_ring) / per_ring
    for p in np.asarray(singular_set, dtype=np.float64).reshape(-1, 2):
        seeds.append(p[None, :])
        for k in range(1, rings + 1):
            rr = radius * k / rings * (1.0 - 1e-9)
            seeds.append(p + rr * np.column_stack([np.cos(angle), np.sin(angle)]))
    return np.vstack(seeds) if seeds else np.zeros((0, 2))


def build_patch(
    kind: str,
    params: Dict[str, Any],
    grid: GridSpec,
    mollify_width: Optional[float] = None,
    profile: str = "constant",
    amplitude: float = 0.0,
    plateau_radius: float = DEFAULT_PLATEAU_RADIUS,
    singular_set: Optional[Array] = None,
    tangency_order: Optional[float] = None,
    contour_points: int = DEFAULT_CONTOUR_POINTS,
    vorticity: float = 1.0,
):
    """Build the patch description and the initial solver state

    Args:
        kind: disc, ellipse, square or custom_levelset
        params: Shape parameters (radius, center, a, b, angle, half_side, level)
        grid: Simulation grid
        mollify_width: eta (default 4 grid cells)
        profile: Density profile id
        amplitude: delta_rho
        plateau_radius: r
        singular_set: Sigma_0 (default: the shape's corners)
        tangency_order: gamma~_0 (default 1 with corners, 0 without)
        contour_points: Boundary samples
        vorticity: Patch strength

    Returns:
        (PatchSpec, State)

    Raises:
        ConfigurationError: The patch leaves the central quarter, or the
            plateau swallows the whole boundary of a smooth patch
    """
    from .boussinesq_solver import State

    shape = make_shape(kind, params, grid)
    width = DEFAULT_MOLLIFY_CELLS * grid.dx if mollify_width is None else float(mollify_width)
    sigma = shape.corners if singular_set is None else np.asarray(singular_set, float)
    sigma = sigma.reshape(-1, 2)
    violations = []
    if shape.bounding_radius > 0.25 * grid.length:
        violations.append(
            f"patch radius {shape.bounding_radius:.3f} leaves the central quarter"
            f" (L/4 = {grid.length / 4:.3f})"
        )
    if width <= 0.0:
        violations.append(f"patch.mollify_width = {width} must be positive")
    if violations:
        raise ConfigurationError("invalid patch", violations)

    contour = shape.contour(contour_points)
    if sigma.shape[0]:
        offsets = contour[:, None, :] - sigma[None, :, :]
        gap = np.min(np.hypot(offsets[..., 0], offsets[..., 1]), axis=1)
        if np.all(gap < plateau_radius) and shape.corners.shape[0] == 0:
            raise ConfigurationError(
                "invalid patch",
                [
                    f"patch.plateau_radius = {plateau_radius} covers the whole boundary"
                    " of a smooth patch"
                ],
            )

    default_order = 1.0 if sigma.shape[0] else 0.0
    x1, x2 = grid.coordinates()
    omega0 = vorticity * mollified_indicator(shape, grid, width)
    rho0 = density_profile(profile, grid, amplitude, sigma, plateau_radius, shape.bounding_radius)
    spec = PatchSpec(
        kind=kind,
        shape=shape,
        grid=grid,
        level_fn=ScalarField(grid, shape.level(x1, x2)),
        contour=contour,
        singular_set=sigma,
        mollify_width=width,
        amplitude=amplitude,
        plateau_radius=plateau_radius,
        profile=profile,
        tangency_order=default_order if tangency_order is None else tangency_order,
        omega0=omega0,
        rho0=rho0,
        tube_width=0.25 * shape.scale,
        plateau_seeds=plateau_seed_points(sigma, 0.5 * plateau_radius),
    )
    logger.info(
        "built {kind} patch: area={area:.6f} singular points={m}",
        kind=kind,
        area=omega0.integral(),
        m=int(sigma.shape[0]),
    )
    return spec, State.initial(omega0, rho0, spec.tracers())


def check_hypothesis_h(spec: PatchSpec) -> float:
    """Measured c of |grad f0(x)| >= c dist(x, Sigma_0)^gamma~ on V_0 minus Sigma_0

    Returns c (positive when the hypothesis holds on the grid).
    """
    x1, x2 = spec.grid.coordinates()
    g1, g2 = spec.level_gradient()
    tube = spec.shape.boundary_distance(x1, x2) < spec.tube_width
    if spec.is_singular:
        dist = distance_to_points(spec.grid, spec.singular_set)
        tube &= dist > 0.0
        ratio = np.hypot(g1, g2) / dist**spec.tangency_order
    else:
        ratio = np.hypot(g1, g2)
    if not tube.any():
        raise InsufficientDataError(0, 1, "grid points in the boundary tube")
    return float(np.min(ratio[tube]))


def _family_from_gradient(
    spec: PatchSpec, g1: Array, g2: Array, family_id: str, h: Optional[float] = None
) -> FrameFamily:
    grid = spec.grid
    outside = 1.0 - spec.tube_cutoff()
    members = [
        VelocityField(ScalarField(grid, -g2), ScalarField(grid, g1)),
        VelocityField(ScalarField(grid, outside), ScalarField.zeros(grid)),
    ]
    return FrameFamily(members, ["tangent", "far"], family_id, h)


def build_admissible_family(spec: PatchSpec) -> FrameFamily:
    """{grad_perp f0, (1 - alpha~)(1, 0)} for a smooth patch

    Raises:
        ConstructionError: The patch has a singular set
        DegeneracyError: I = 0, with the witness point
    """
    if spec.is_singular:
        raise ConstructionError("admissible family needs a smooth patch; use build_singular_family")
    g1, g2 = spec.level_gradient()
    family = _family_from_gradient(spec, g1, g2, "admissible")
    value, witness = family.nondegeneracy()
    if value <= 0.0:
        raise DegeneracyError(witness, value)
    residual = directional_derivative(spec.omega0, family.members[0]).max_abs()
    logger.debug(
        "admissible family: I={value:.4e} |d_X omega0|_inf={residual:.3e}",
        value=value,
        residual=residual,
    )
    return family


@dataclass
class SingularFamily:
    """Per-scale singular families and their measured order

    Attributes:
        families: h -> FrameFamily
        nondegeneracy: h -> I(Sigma_h, X_h)
        n_eps: h -> N_eps(Sigma_h, X_h)
        support_distance: h -> min distance of supp X_{0,0,h} to Sigma_0
        rho_directional: h -> ||d_X rho0||_eps
        order: Fitted (alpha0, beta0, gamma0)
        beta_construction: gamma0 - eps - 1, the exponent the construction allows
    """

    families: Dict[float, FrameFamily]
    nondegeneracy: Dict[float, float]
    n_eps: Dict[float, float]
    support_distance: Dict[float, float]
    rho_directional: Dict[float, float]
    order: Tuple[float, float, float]
    beta_construction: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha0": self.order[0],
            "beta0": self.order[1],
            "gamma0": self.order[2],
            "beta_construction": self.beta_construction,
            "scales": sorted(self.families),
            "nondegeneracy": [self.nondegeneracy[h] for h in sorted(self.families)],
            "n_eps": [self.n_eps[h] for h in sorted(self.families)],
            "support_distance": [self.support_distance[h] for h in sorted(self.families)],
        }


def singular_family_at(spec: PatchSpec, h: float) -> FrameFamily:
    """X_{0,0,h} = grad_perp(theta_h f0) (exactly zero on dist < h/2) and (1 - alpha~)(1, 0)"""
    x1, x2 = spec.grid.coordinates()
    f, g1, g2 = spec.shape.level_and_gradient(x1, x2)
    dist, e1, e2 = _nearest_point_vectors(spec.grid, spec.singular_set)
    theta = theta_cutoff(dist, h)
    dtheta = theta_cutoff_derivative(dist, h)
    safe = np.where(dist > 0.0, dist, 1.0)
    t1 = dtheta * e1 / safe
    t2 = dtheta * e2 / safe
    return _family_from_gradient(spec, theta * g1 + f * t1, theta * g2 + f * t2, "singular", h)


def build_singular_family(
    spec: PatchSpec, h_grid: Sequence[float], eps: float = DEFAULT_EPS
) -> SingularFamily:
    """h-indexed families with measured order (alpha0, beta0, gamma0)

    alpha0 is the smallest exponent with supp X_h outside (Sigma_0)_{h^alpha0};
    gamma0 and beta0 are log-log slopes of I(h) ~ h^-gamma0 and N_eps(h) ~ h^beta0.

    Raises:
        ConstructionError: Empty singular set or no exponent fits the data
    """
    if not spec.is_singular:
        raise ConstructionError("singular family needs a nonempty singular set")
    scales = validate_scales(h_grid, spec.grid)
    families, i_values, n_values, support, rho_dir = {}, {}, {}, {}, {}
    dist = distance_to_points(spec.grid, spec.singular_set)
    for h in scales:
        h = float(h)
        family = singular_family_at(spec, h)
        exclude = inflate(spec.grid, spec.singular_set, h)
        value, witness = family_nondegeneracy(family.members, exclude)
        if value <= 0.0:
            raise DegeneracyError(witness, value)
        families[h] = family
        i_values[h] = value
        n_values[h] = family_regularity(family.members, eps) / value
        nonzero = family.members[0].magnitude() > 0.0
        support[h] = float(np.min(dist[nonzero])) if nonzero.any() else math.inf
        rho_dir[h] = holder_norm(directional_derivative(spec.rho0, family.members[0]), eps)
    if len(scales) < 2:
        raise ConstructionError("singular family order needs at least two scales")
    logs = np.log(scales)
    try:
        alpha0 = float(max(math.log(support[h]) / math.log(h) for h in families))
        gamma0 = -float(np.polyfit(logs, np.log([i_values[h] for h in scales]), 1)[0])
        beta0 = float(np.polyfit(logs, np.log([n_values[h] for h in scales]), 1)[0])
    except (ValueError, np.linalg.LinAlgError) as e:
        raise ConstructionError(f"singular family order fit failed: {e}") from e
    if not all(math.isfinite(x) for x in (alpha0, beta0, gamma0)):
        raise ConstructionError("singular family order fit produced non-finite exponents")
    order = (alpha0, beta0, gamma0)
    for family in families.values():
        family.order = order
    logger.info(
        "singular family order alpha0={a:.3f} beta0={b:.3f} gamma0={g:.3f}",
        a=alpha0,
        b=beta0,
        g=gamma0,
    )
    return SingularFamily(families, i_values, n_values, support, rho_dir, order, gamma0 - eps - 1.0)


def extract_contour(f: ScalarField, level: float) -> Array:
    """Longest level curve of a grid field (marching squares), in physical coordinates"""
    contours = measure.find_contours(f.values, level)
    if not contours:
        raise InsufficientDataError(0, 1, f"contours at level {level}")
    longest = max(contours, key=len)
    points = -0.5 * f.grid.length + f.grid.dx * longest
    if np.allclose(points[0], points[-1]):
        points = points[:-1]
    return points


@dataclass(frozen=True)
class BoundaryDiagnostics:
    """Regularity of one boundary snapshot

    Attributes:
        exponent: Estimated Hölder exponent of the tangent, in [0, 1]
        seminorm: Fitted Hölder constant
        r_squared: Regression quality
        arclength: Contour length
        curvature_mean, curvature_max: Over the unmasked part
        unmasked: Number of points used
    """

    exponent: float
    seminorm: float
    r_squared: float
    arclength: float
    curvature_mean: float
    curvature_max: float
    unmasked: int

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def _fit_line(x: Array, y: Array) -> Tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - float(np.sum(residual**2)) / total if total > 0.0 else 1.0
    return float(slope), float(intercept), r2


def boundary_holder_estimate(
    contour: Array,
    mask_points: Optional[Array] = None,
    h: float = 0.0,
    grid: Optional[GridSpec] = None,
    min_points: int = 64,
) -> BoundaryDiagnostics:
    """Hölder exponent of the tangent of a closed contour away from masked points

    Second differences |g(s + m) - 2 g(s) + g(s - m)| of the arclength
    parametrization scale like (m ds)^(1 + eps) for a C^(1+eps) curve; eps is
    read off a log-log fit over dyadic separations m, using only windows that
    lie entirely outside the mask. Straight pieces sit at the ceiling 1.

    Raises:
        InsufficientDataError: Fewer than ``min_points`` unmasked points
    """
    points = resample_closed(contour, max(len(contour), 512))
    count = len(points)
    ds = arclength(points) / count
    masked = np.zeros(count, dtype=bool)
    if mask_points is not None and h > 0.0 and len(mask_points):
        mask_points = np.asarray(mask_points, dtype=np.float64).reshape(-1, 2)
        diff = points[:, None, :] - mask_points[None, :, :]
        if grid is not None:
            diff = grid.min_image(diff)
        masked = np.min(np.hypot(diff[..., 0], diff[..., 1]), axis=1) < h
    unmasked = int(np.count_nonzero(~masked))
    if unmasked < min_points:
        raise InsufficientDataError(unmasked, min_points, "unmasked contour points")

    # windows are valid when no masked index lies in [k - m, k + m]
    masked_count = np.concatenate([[0], np.cumsum(np.concatenate([masked, masked, masked]))])
    scale = max(float(np.max(np.abs(points))), 1.0)
    separations, sups = [], []
    m = 1
    while m <= count // 8:
        index = np.arange(count) + count
        window = masked_count[index + m + 1] - masked_count[index - m]
        valid = window == 0
        if valid.sum() >= 4:
            second = np.roll(points, -m, axis=0) - 2.0 * points + np.roll(points, m, axis=0)
            sups.append(float(np.max(np.hypot(*second[valid].T))))
            separations.append(m * ds)
        m *= 2

    second1 = np.roll(points, -1, axis=0) - 2.0 * points + np.roll(points, 1, axis=0)
    curvature = np.hypot(*second1.T)[~masked] / ds**2
    length = arclength(points)
    sups_arr = np.asarray(sups)
    if len(sups) < 3:
        raise InsufficientDataError(len(sups), 3, "dyadic separations")
    if np.all(sups_arr <= 1e-12 * scale):
        return BoundaryDiagnostics(
            1.0, 0.0, 1.0, length, float(np.mean(curvature)), float(np.max(curvature)), unmasked
        )
    sups_arr = np.maximum(sups_arr, 1e-300)
    slope, intercept, r2 = _fit_line(np.log(separations), np.log(sups_arr))
    exponent = float(np.clip(slope - 1.0, 0.0, 1.0))
    return BoundaryDiagnostics(
        exponent,
        float(math.exp(intercept)),
        r2,
        length,
        float(np.mean(curvature)),
        float(np.max(curvature)),
        unmasked,
    )


@dataclass(frozen=True)
class BlowupProfile:
    """Masked velocity-gradient sup versus -log h

    Attributes:
        scales: h values
        masked_sup: ||grad v||_{L^inf((Sigma_t)_h^c)}
        slope, intercept, r_squared: Least-squares fit against -log h
    """

    scales: Array
    masked_sup: Array
    slope: float
    intercept: float
    r_squared: float

    def rows(self) -> List[Tuple[float, float]]:
        return [(float(h), float(s)) for h, s in zip(self.scales, self.masked_sup)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "h": self.scales.tolist(),
            "masked_sup": self.masked_sup.tolist(),
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
        }


def singular_blowup_profile(
    v: VelocityField, sigma_t: Array, h_grid: Sequence[float]
) -> BlowupProfile:
    """Fit ||grad v||_{L^inf((Sigma_t)_h^c)} = slope * (-log h) + intercept over the scale grid"""
    grid = v.grid
    scales = np.sort(np.asarray(h_grid, dtype=np.float64))[::-1]
    g = ScalarField(grid, v.gradient_norm())
    dist = distance_to_points(grid, sigma_t)
    sups = masked_sup_profile(g, dist, scales)
    slope, intercept, r2 = _fit_line(-np.log(scales), sups)
    return BlowupProfile(scales, sups, slope, intercept, r2)


def plateau_persistence(series: Any, spec: PatchSpec, threshold: float = 1e-3) -> CheckReport:
    """max |grad rho| over the advected plateau seeds <= threshold * ||grad rho||_inf"""
    report = CheckReport("plateau_persistence")
    if spec.plateau_seeds.shape[0] == 0:
        report.notes["skipped"] = "no plateau"
        return report
    for state in series.snapshots:
        seeds = state.tracers[spec.plateau_slice]
        g1 = spectral_derivative(state.rho, 1)
        g2 = spectral_derivative(state.rho, 2)
        magnitude = ScalarField(state.grid, np.hypot(g1.values, g2.values))
        local = float(np.max(np.abs(PeriodicInterpolator(magnitude)(seeds))))
        bound = threshold * magnitude.max_abs()
        report.add(CheckRow.compare("plateau_persistence", state.t, local, bound))
    return report


def kirchhoff_rate(a: float, b: float, vorticity: float = 1.0) -> float:
    """Angular velocity of the Kirchhoff ellipse, vorticity * ab / (a + b)^2"""
    return vorticity * a * b / (a + b) ** 2


def ellipse_orientation(points: Array) -> float:
    """Major-axis angle of a closed contour in [-pi/2, pi/2), from second moments"""
    centered = np.asarray(points, dtype=np.float64) - np.mean(points, axis=0)
    cov = centered.T @ centered / len(centered)
    values, vectors = np.linalg.eigh(cov)
    major = vectors[:, int(np.argmax(values))]
    angle = math.atan2(major[1], major[0])
    return (angle + 0.5 * math.pi) % math.pi - 0.5 * math.pi


def theta_field(spec: PatchSpec, h: float) -> ScalarField:
    return ScalarField(spec.grid, theta_cutoff(distance_to_points(spec.grid, spec.singular_set), h))


def theta_norm_scaling(
    spec: PatchSpec,
    h_grid: Sequence[float],
    r_list: Sequence[float] = (DEFAULT_EPS, 1.0, 1.0 + DEFAULT_EPS),
) -> Dict[float, Dict[str, float]]:
    """Check ||theta_h||_r <= C_r h^-r across scales

    Returns per r the fitted constant C_r = max_h h^r ||theta_h||_r and the
    log-log slope of ||theta_h||_r against h (about -r).
    """
    scales = validate_scales(h_grid, spec.grid)
    out = {}
    for r in r_list:
        norms = np.array([holder_norm(theta_field(spec, float(h)), r) for h in scales])
        slope = math.nan
        if len(scales) > 1:
            slope = float(np.polyfit(np.log(scales), np.log(norms), 1)[0])
        out[float(r)] = {"constant": float(np.max(norms * scales**r)), "slope": slope}
    return out
