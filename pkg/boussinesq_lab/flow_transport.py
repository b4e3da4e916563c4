"""
Flow maps, transported frames and the distance-set calculus

The flow psi(t, x) = x + int_0^t v(tau, psi(tau, x)) dtau is integrated with
RK4 against a velocity source: a recorded ``VelocityHistory`` (cubic spline
in space, linear in time between stored samples) or an ``AnalyticVelocity``.
Trajectories are kept unwrapped; evaluation wraps periodically.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .dyadic_analyzer import (
    family_nondegeneracy,
    family_regularity,
)
from .exceptions import DomainError
from .logger import logger
from .report import CheckReport, CheckRow
from .spectral_core import (
    GridSpec,
    PeriodicInterpolator,
    ScalarField,
    VelocityField,
    biot_savart,
    dealias,
    spectral_derivative,
)


class VelocitySource(Protocol):
    """Anything that can be sampled for velocity and its gradient"""

    grid: Optional[GridSpec]

    def covers(self, t0: float, t1: float) -> bool:
        ...

    def velocity(self, t: float, points: np.ndarray) -> np.ndarray:
        ...

    def gradient(self, t: float, points: np.ndarray) -> np.ndarray:
        ...

    def field(self, t: float) -> VelocityField:
        ...

    def default_dt(self) -> float:
        ...


class _Sampled:
    """Interpolators of one velocity sample and its Jacobian"""

    def __init__(self, v: VelocityField):
        self.v = v
        self.u = [PeriodicInterpolator(v.u1), PeriodicInterpolator(v.u2)]
        grad = v.gradient()
        self.grad = [[PeriodicInterpolator(grad[i, j], v.grid) for j in range(2)] for i in range(2)]

    def velocity(self, points: np.ndarray) -> np.ndarray:
        return np.stack([u(points) for u in self.u], axis=-1)

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return np.stack(
            [np.stack([self.grad[i][j](points) for j in range(2)], axis=-1) for i in range(2)],
            axis=-2,
        )


class VelocityHistory:
    """Velocity recorded at discrete times, linear in time between samples

    Args:
        times: Increasing sample times
        omegas: Vorticity at each sample; velocities come from Biot-Savart
    """

    def __init__(self, times: Sequence[float], omegas: Sequence[ScalarField]):
        if len(times) != len(omegas) or not times:
            raise DomainError("velocity history needs matching, nonempty times and samples")
        self.times = np.asarray(times, dtype=np.float64)
        if np.any(np.diff(self.times) <= 0.0):
            raise DomainError("velocity history times must increase")
        self.omegas = list(omegas)
        self.grid: Optional[GridSpec] = self.omegas[0].grid
        self._samples: Dict[int, _Sampled] = {}

    @classmethod
    def from_series(cls, series: Any) -> "VelocityHistory":
        return cls(series.history_times, series.history_omega)

    def _sample(self, index: int) -> _Sampled:
        if index not in self._samples:
            self._samples[index] = _Sampled(biot_savart(self.omegas[index]))
        return self._samples[index]

    def covers(self, t0: float, t1: float) -> bool:
        lo, hi = min(t0, t1), max(t0, t1)
        tol = 1e-9 * max(1.0, abs(self.times[-1]))
        return lo >= self.times[0] - tol and hi <= self.times[-1] + tol

    def _bracket(self, t: float) -> Tuple[int, int, float]:
        if len(self.times) == 1:
            return 0, 0, 0.0
        i = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        weight = (t - self.times[i]) / (self.times[i + 1] - self.times[i])
        return i, i + 1, float(np.clip(weight, 0.0, 1.0))

    def _blend(self, t: float, getter: Callable[[_Sampled], np.ndarray]) -> np.ndarray:
        i, j, w = self._bracket(t)
        first = getter(self._sample(i))
        if w == 0.0:
            return first
        return (1.0 - w) * first + w * getter(self._sample(j))

    def velocity(self, t: float, points: np.ndarray) -> np.ndarray:
        return self._blend(t, lambda s: s.velocity(points))

    def gradient(self, t: float, points: np.ndarray) -> np.ndarray:
        return self._blend(t, lambda s: s.gradient(points))

    def field(self, t: float) -> VelocityField:
        i, j, w = self._bracket(t)
        a = self._sample(i).v
        if w == 0.0:
            return a
        b = self._sample(j).v
        return VelocityField(
            (1.0 - w) * a.u1 + w * b.u1, (1.0 - w) * a.u2 + w * b.u2, a.provenance
        )

    def default_dt(self) -> float:
        if len(self.times) == 1:
            return 1e-3
        return float(np.min(np.diff(self.times)))


class AnalyticVelocity:
    """Velocity given in closed form

    Args:
        func: (t, points) -> velocities, both (..., 2)
        grad_func: (t, points) -> Jacobians (..., 2, 2), G[..., i, j] = d_j v_i
        grid: Needed only for ``field``
    """

    def __init__(
        self,
        func: Callable[[float, np.ndarray], np.ndarray],
        grad_func: Optional[Callable[[float, np.ndarray], np.ndarray]] = None,
        grid: Optional[GridSpec] = None,
        dt: float = 1e-3,
    ):
        self.func = func
        self.grad_func = grad_func
        self.grid = grid
        self._dt = dt

    @classmethod
    def rigid_rotation(cls, rate: float, grid: Optional[GridSpec] = None) -> "AnalyticVelocity":
        """v = rate * x_perp = rate * (-x2, x1)"""
        jacobian = np.array([[0.0, -rate], [rate, 0.0]])

        def velocity(t: float, points: np.ndarray) -> np.ndarray:
            return rate * np.stack([-points[..., 1], points[..., 0]], axis=-1)

        def gradient(t: float, points: np.ndarray) -> np.ndarray:
            return np.broadcast_to(jacobian, points.shape[:-1] + (2, 2)).copy()

        return cls(velocity, gradient, grid)

    @classmethod
    def zero(cls, grid: Optional[GridSpec] = None) -> "AnalyticVelocity":
        return cls.rigid_rotation(0.0, grid)

    def covers(self, t0: float, t1: float) -> bool:
        return True

    def velocity(self, t: float, points: np.ndarray) -> np.ndarray:
        return self.func(t, np.asarray(points, dtype=np.float64))

    def gradient(self, t: float, points: np.ndarray) -> np.ndarray:
        if self.grad_func is None:
            raise DomainError("analytic velocity has no gradient")
        return self.grad_func(t, np.asarray(points, dtype=np.float64))

    def field(self, t: float) -> VelocityField:
        if self.grid is None:
            raise DomainError("analytic velocity needs a grid to be sampled")
        values = self.velocity(t, self.grid.points()).reshape(self.grid.n, self.grid.n, 2)
        return VelocityField(
            ScalarField(self.grid, values[..., 0]), ScalarField(self.grid, values[..., 1])
        )

    def default_dt(self) -> float:
        return self._dt


@dataclass(frozen=True)
class FlowMap:
    """Trajectories psi(t, x0) of a set of seeds

    Attributes:
        seeds: (m, 2) starting points
        times: (k,) recorded times, times[0] is the start time
        trajectories: (k, m, 2) positions, unwrapped
    """

    seeds: np.ndarray
    times: np.ndarray
    trajectories: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.trajectories[-1]

    def at(self, t: float) -> np.ndarray:
        """Positions at the recorded time closest to t"""
        return self.trajectories[int(np.argmin(np.abs(self.times - t)))]

    def wrapped(self, grid: GridSpec) -> np.ndarray:
        return wrap(self.final, grid)


def wrap(points: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Representative of each point in [-L/2, L/2)^2"""
    half = 0.5 * grid.length
    return np.mod(np.asarray(points) + half, grid.length) - half


def _steps(t0: float, t1: float, dt: float) -> Tuple[int, float]:
    span = t1 - t0
    if span == 0.0:
        return 0, 0.0
    count = max(1, int(math.ceil(abs(span) / dt - 1e-9)))
    return count, span / count


def _rk4_points(source: VelocitySource, points: np.ndarray, t: float, h: float) -> np.ndarray:
    k1 = source.velocity(t, points)
    k2 = source.velocity(t + 0.5 * h, points + 0.5 * h * k1)
    k3 = source.velocity(t + 0.5 * h, points + 0.5 * h * k2)
    k4 = source.velocity(t + h, points + h * k3)
    return points + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _log_seam_crossing(points: np.ndarray, grid: Optional[GridSpec]) -> None:
    if grid is None:
        return
    half = 0.5 * grid.length
    outside = int(np.count_nonzero(np.abs(points) >= half))
    if outside:
        logger.debug("{count} flow coordinates crossed the torus seam; wrapped", count=outside)


def integrate_flow(
    source: VelocitySource,
    points: np.ndarray,
    t: float,
    dt: Optional[float] = None,
    t0: float = 0.0,
    record_every: int = 0,
) -> FlowMap:
    """RK4 trajectories from time t0 to time t (t < t0 runs backwards)

    Args:
        source: Velocity source covering [t0, t]
        points: (m, 2) seeds
        t: Final time
        dt: Step bound (default: the source's own spacing)
        t0: Start time
        record_every: Also record every this many steps (0: endpoints only)

    Example:
        >>> flow = integrate_flow(AnalyticVelocity.zero(), seeds, 1.0)
        >>> np.array_equal(flow.final, seeds)
        True
    """
    if not source.covers(t0, t):
        raise DomainError(f"velocity source does not cover [{min(t0, t)}, {max(t0, t)}]")
    seeds = np.array(points, dtype=np.float64).reshape(-1, 2)
    count, h = _steps(t0, t, dt or source.default_dt())
    times = [t0]
    frames = [seeds.copy()]
    current = seeds.copy()
    for i in range(count):
        current = _rk4_points(source, current, t0 + i * h, h)
        if record_every and (i + 1) % record_every == 0 and i + 1 < count:
            times.append(t0 + (i + 1) * h)
            frames.append(current.copy())
    if count:
        times.append(t)
        frames.append(current)
    _log_seam_crossing(current, source.grid)
    return FlowMap(seeds, np.asarray(times), np.stack(frames))


def inverse_flow(
    source: VelocitySource, points: np.ndarray, t: float, dt: Optional[float] = None
) -> np.ndarray:
    """Preimages psi^{-1}(t, x) by backward integration from t to 0"""
    return integrate_flow(source, points, 0.0, dt=dt, t0=t).final


def round_trip_error(
    source: VelocitySource, points: np.ndarray, t: float, dt: Optional[float] = None
) -> float:
    """max |psi^{-1}(t, psi(t, x)) - x|"""
    forward = integrate_flow(source, points, t, dt).final
    back = inverse_flow(source, forward, t, dt)
    return float(np.max(np.hypot(*(back - np.asarray(points)).T)))


def pullback(
    f0: ScalarField, source: VelocitySource, t: float, dt: Optional[float] = None
) -> ScalarField:
    """f(t, x) = f0(psi^{-1}(t, x)) sampled on the grid"""
    grid = f0.grid
    pre = inverse_flow(source, grid.points(), t, dt)
    return ScalarField(grid, PeriodicInterpolator(f0)(pre).reshape(grid.n, grid.n))


def shoelace_area(points: np.ndarray) -> float:
    """Unsigned area enclosed by a closed polyline (last point joins the first)"""
    x, y = np.asarray(points, dtype=np.float64).T
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


@dataclass
class FrameFamily:
    """Finite family of vector fields X_lambda on the grid

    Attributes:
        members: One VelocityField per label
        labels: Label of each member
        family_id: Name used in report keys ('admissible', 'singular')
        h: Scale index for the singular construction
        t: Time the family lives at
        order: Measured (alpha, beta, gamma) for singular families
    """

    members: List[VelocityField]
    labels: List[str] = field(default_factory=list)
    family_id: str = "admissible"
    h: Optional[float] = None
    t: float = 0.0
    order: Optional[Tuple[float, float, float]] = None

    def __post_init__(self):
        if not self.members:
            raise DomainError("a frame family needs at least one member")
        if not self.labels:
            self.labels = [str(i) for i in range(len(self.members))]

    @property
    def grid(self) -> GridSpec:
        return self.members[0].grid

    def nondegeneracy(
        self, exclude: Optional[np.ndarray] = None
    ) -> Tuple[float, Tuple[float, float]]:
        """I(Sigma, X) and its witness grid point"""
        return family_nondegeneracy(self.members, exclude)

    def n_eps(self, eps: float, exclude: Optional[np.ndarray] = None) -> float:
        value, _ = self.nondegeneracy(exclude)
        return family_regularity(self.members, eps) / value if value > 0.0 else math.inf

    def max_norm(self) -> float:
        return max(m.max_speed() for m in self.members)

    def max_divergence(self) -> float:
        return max(m.divergence().max_abs() for m in self.members)

    def with_members(self, members: List[VelocityField], t: float) -> "FrameFamily":
        return FrameFamily(members, list(self.labels), self.family_id, self.h, t, self.order)


def _shift(ys: List[np.ndarray], ks: List[np.ndarray], scale: float) -> List[np.ndarray]:
    return [y + scale * k for y, k in zip(ys, ks)]


def _frame_characteristics(
    family0: FrameFamily, source: VelocitySource, t: float, dt: Optional[float]
) -> List[VelocityField]:
    grid = family0.grid
    targets = grid.points()
    pre = inverse_flow(source, targets, t, dt)
    initial = [
        np.stack([PeriodicInterpolator(m.u1)(pre), PeriodicInterpolator(m.u2)(pre)], axis=-1)
        for m in family0.members
    ]
    count, h = _steps(0.0, t, dt or source.default_dt())
    # positions and all frame vectors share the RK4 stages
    x = pre
    ys = initial

    def tendency(time: float, pos: np.ndarray, vecs: List[np.ndarray]):
        jac = source.gradient(time, pos)
        return source.velocity(time, pos), [np.einsum("mij,mj->mi", jac, y) for y in vecs]

    for i in range(count):
        s = i * h
        k1x, k1y = tendency(s, x, ys)
        k2x, k2y = tendency(s + 0.5 * h, x + 0.5 * h * k1x, _shift(ys, k1y, 0.5 * h))
        k3x, k3y = tendency(s + 0.5 * h, x + 0.5 * h * k2x, _shift(ys, k2y, 0.5 * h))
        k4x, k4y = tendency(s + h, x + h * k3x, _shift(ys, k3y, h))
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        ys = [
            y + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for y, a, b, c, d in zip(ys, k1y, k2y, k3y, k4y)
        ]
    members = []
    for y in ys:
        y = y.reshape(grid.n, grid.n, 2)
        members.append(VelocityField(ScalarField(grid, y[..., 0]), ScalarField(grid, y[..., 1])))
    return members


def _frame_tendency(v: VelocityField, x: VelocityField) -> Tuple[ScalarField, ScalarField]:
    # d_t X = -(v.grad) X + (X.grad) v
    out = []
    for xi, vi in ((x.u1, v.u1), (x.u2, v.u2)):
        advect = v.u1 * spectral_derivative(xi, 1) + v.u2 * spectral_derivative(xi, 2)
        stretch = x.u1 * spectral_derivative(vi, 1) + x.u2 * spectral_derivative(vi, 2)
        out.append(dealias(stretch - advect))
    return out[0], out[1]


def _shifted(
    base: VelocityField, k: Tuple[ScalarField, ScalarField], scale: float
) -> VelocityField:
    return VelocityField(base.u1 + scale * k[0], base.u2 + scale * k[1])


def _frame_eulerian(
    family0: FrameFamily, source: VelocitySource, t: float, dt: Optional[float]
) -> List[VelocityField]:
    count, h = _steps(0.0, t, dt or source.default_dt())
    members = []
    for x in family0.members:
        for i in range(count):
            s = i * h
            v_a, v_m, v_b = source.field(s), source.field(s + 0.5 * h), source.field(s + h)
            k1 = _frame_tendency(v_a, x)
            k2 = _frame_tendency(v_m, _shifted(x, k1, 0.5 * h))
            k3 = _frame_tendency(v_m, _shifted(x, k2, 0.5 * h))
            k4 = _frame_tendency(v_b, _shifted(x, k3, h))
            x = VelocityField(
                x.u1 + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
                x.u2 + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            )
        members.append(x)
    return members


def transport_frame(
    family0: FrameFamily,
    source: VelocitySource,
    t: float,
    method: str = "characteristics",
    dt: Optional[float] = None,
) -> FrameFamily:
    """Push a frame forward: X_t(x) = (d_{X_0} psi(t))(psi^{-1}(t, x))

    ``characteristics`` integrates the Jacobian ODE along trajectories started
    at the preimages of the grid; ``eulerian`` solves
    d_t X + v.grad X = d_X v on the grid. Degenerate results are flagged in
    the log, not raised.
    """
    if not source.covers(0.0, t):
        raise DomainError(f"velocity source does not cover [0, {t}]")
    if method == "characteristics":
        members = _frame_characteristics(family0, source, t, dt)
    elif method == "eulerian":
        members = _frame_eulerian(family0, source, t, dt)
    else:
        raise DomainError(f"unknown frame transport method {method!r}")
    family = family0.with_members(members, t)
    value, witness = family.nondegeneracy()
    if value <= 1e-12 * max(family.max_norm(), 1e-300):
        logger.warning(
            "transported family {family} degenerate at {witness} (I = {value:.2e})",
            family=family.family_id,
            witness=witness,
            value=value,
        )
    return family


def compare_frames(a: FrameFamily, b: FrameFamily) -> float:
    """max over members of ||X_a - X_b||_inf relative to max ||X_a||_inf"""
    scale = max(a.max_norm(), 1e-300)
    worst = 0.0
    for xa, xb in zip(a.members, b.members):
        diff = np.hypot(xa.u1.values - xb.u1.values, xa.u2.values - xb.u2.values)
        worst = max(worst, float(np.max(diff)))
    return worst / scale


def check_frame_lower_bound(
    family0: FrameFamily,
    transported: Sequence[Tuple[FrameFamily, float]],
    exclude0: Optional[np.ndarray] = None,
    excludes: Optional[Sequence[Optional[np.ndarray]]] = None,
    tolerance: float = 0.0,
) -> CheckReport:
    """I(X_t) >= I(X_0) exp(-V(t)) for each (family at t, V(t)) pair"""
    report = CheckReport("frame_lower_bound")
    i0, _ = family0.nondegeneracy(exclude0)
    for k, (family, v_accum) in enumerate(transported):
        exclude = excludes[k] if excludes is not None else None
        it, _ = family.nondegeneracy(exclude)
        report.add(
            CheckRow.compare(
                "frame_lower_bound", family.t, i0 * math.exp(-v_accum), it, tolerance=tolerance
            )
        )
    report.notes["i0"] = i0
    return report


def _check_scale(h: float, ll_integral: float) -> None:
    if not 0.0 < h <= math.exp(-1.0) * (1.0 + 1e-12):
        raise DomainError(f"h = {h} outside (0, 1/e]")
    if ll_integral < 0.0:
        raise DomainError(f"log-Lipschitz integral {ll_integral} is negative")


def delta_scale(h: float, ll_integral: float) -> float:
    """delta_t(h) = h ** exp(int_0^t ||v||_LL)

    Example:
        >>> delta_scale(0.25, math.log(2.0))
        0.0625
    """
    _check_scale(h, ll_integral)
    return h ** math.exp(ll_integral)


def inverse_delta_scale(h: float, ll_integral: float) -> float:
    """delta_t^{-1}(h) = h ** exp(-int_0^t ||v||_LL)"""
    _check_scale(h, ll_integral)
    return h ** math.exp(-ll_integral)


def two_time_delta_scale(h: float, ll_accum_t: float, ll_accum_tau: float) -> float:
    """delta_{tau,t}(h) = h ** exp(int_tau^t ||v||_LL) from two accumulated integrals"""
    return delta_scale(h, ll_accum_t - ll_accum_tau)


def distance_set_samples(
    grid: GridSpec, a0: np.ndarray, h: float, per_point: int = 64
) -> np.ndarray:
    """Points of the boundary of (A0)_h^c: circles of radius h kept where dist(., A0) >= h"""
    a0 = np.asarray(a0, dtype=np.float64).reshape(-1, 2)
    angle = 2.0 * np.pi * np.arange(per_point) / per_point
    ring = h * np.column_stack([np.cos(angle), np.sin(angle)])
    candidates = (a0[:, None, :] + ring[None, :, :]).reshape(-1, 2)
    dist = _min_distance(grid, candidates, a0)
    return candidates[dist >= h * (1.0 - 1e-9)]


def _min_distance(grid: GridSpec, points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    d1 = grid.min_image(points[:, None, 0] - targets[None, :, 0])
    d2 = grid.min_image(points[:, None, 1] - targets[None, :, 1])
    return np.min(np.hypot(d1, d2), axis=1)


def check_distance_set_inclusion(
    a0: np.ndarray,
    source: VelocitySource,
    h: float,
    t: float,
    ll_integral: float,
    grid: GridSpec,
    dt: Optional[float] = None,
    tolerance: Optional[float] = None,
) -> CheckReport:
    """psi(t, (A0)_h^c) stays at distance >= delta_t(h) from A(t) = psi(t, A0)

    Report-only: rows carry the margin dist - delta_t(h) of each sampled
    boundary point; ``passed`` allows ``tolerance`` (default 2 dx) of slack.
    """
    tolerance = 2.0 * grid.dx if tolerance is None else tolerance
    delta = delta_scale(h, ll_integral)
    a0 = np.asarray(a0, dtype=np.float64).reshape(-1, 2)
    samples = distance_set_samples(grid, a0, h)
    moved = integrate_flow(source, np.vstack([a0, samples]), t, dt).final
    a_t, samples_t = moved[: len(a0)], moved[len(a0) :]
    distances = _min_distance(grid, samples_t, a_t)
    report = CheckReport("distance_inclusion")
    worst = int(np.argmin(distances)) if distances.size else None
    if worst is not None:
        report.add(
            CheckRow.compare(
                "distance_inclusion", t, delta, float(distances[worst]), tolerance=tolerance
            )
        )
    report.notes.update(
        {"h": h, "delta": delta, "samples": int(samples.shape[0]), "worst_margin": report.min_slack}
    )
    return report
