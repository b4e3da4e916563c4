"""
Pseudo-spectral RK4 integration of the vorticity-density system

    d_t omega + v . grad omega = d_1 rho
    d_t rho   + v . grad rho   = 0,        v = BiotSavart(omega)

Products are evaluated on the grid and dealiased. Optional Lagrangian
tracers (singular points, contour samples, plateau seeds) ride along in the
same RK4 stages, interpolated with cubic periodic splines.
"""

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import (
    DEFAULT_A,
    DEFAULT_CFL_MAX,
    DEFAULT_DEALIAS_FRACTION,
    DEFAULT_DIAGNOSTICS_EVERY,
    DEFAULT_EPS,
    DEFAULT_SAMPLE_PAIRS,
    MAX_DT_HALVINGS,
    UNDER_RESOLUTION_TAIL,
)
from .dyadic_analyzer import (
    NormReport,
    dyadic_scales,
    holder_norm,
    l_sigma_norm,
    log_lipschitz_norm,
)
from .exceptions import CFLViolationError, ConfigurationError, DivergenceError
from .logger import logger
from .spectral_core import (
    GridSpec,
    PeriodicInterpolator,
    ScalarField,
    VelocityField,
    biot_savart,
    dealias,
    spectral_derivative,
    spectral_tail_fraction,
)


def _whole_steps(t_end: float, dt: float) -> bool:
    steps = t_end / dt
    return abs(steps - round(steps)) <= 1e-9 * max(steps, 1.0)


@dataclass(frozen=True)
class SolverConfig:
    """Time stepping parameters

    Attributes:
        dt: Nominal step; rejected steps are split into halves
        t_end: Final time
        cfl_max: Courant bound dt * max|v| / dx
        dealias_fraction: Retained mode fraction (mirrors GridSpec)
        diagnostics_every: Steps between NormReport snapshots
        history_every: Steps between stored vorticity samples for flow maps
    """

    dt: float
    t_end: float
    cfl_max: float = DEFAULT_CFL_MAX
    dealias_fraction: float = DEFAULT_DEALIAS_FRACTION
    diagnostics_every: int = DEFAULT_DIAGNOSTICS_EVERY
    history_every: int = 1

    def __post_init__(self):
        violations = []
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            violations.append(f"time.dt = {self.dt} must be positive")
        if not (math.isfinite(self.t_end) and self.t_end >= 0.0):
            violations.append(f"time.t_end = {self.t_end} must be nonnegative")
        elif not violations and not _whole_steps(self.t_end, self.dt):
            violations.append(
                f"time.t_end = {self.t_end} is not a whole number of steps dt = {self.dt}"
            )
        if not self.cfl_max > 0.0:
            violations.append(f"time.cfl_max = {self.cfl_max} must be positive")
        if not 0.0 < self.dealias_fraction <= 1.0:
            violations.append(f"dealias_fraction = {self.dealias_fraction} outside (0, 1]")
        if self.diagnostics_every < 1:
            violations.append("time.diagnostics_every must be at least 1")
        if self.history_every < 1:
            violations.append("time.history_every must be at least 1")
        if violations:
            raise ConfigurationError("invalid solver configuration", violations)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True, eq=False)
class State:
    """Solver state; the velocity is derived from omega and cached

    Attributes:
        t: Time
        omega: Vorticity
        rho: Density
        tracers: Optional (m, 2) Lagrangian points, unwrapped
        step: Accepted step count
    """

    t: float
    omega: ScalarField
    rho: ScalarField
    tracers: Optional[np.ndarray] = None
    step: int = 0

    def __post_init__(self):
        if self.omega.grid != self.rho.grid:
            raise ConfigurationError("omega and rho live on different grids")
        if self.tracers is not None:
            tracers = np.array(self.tracers, dtype=np.float64, copy=True).reshape(-1, 2)
            tracers.setflags(write=False)
            object.__setattr__(self, "tracers", tracers)

    @property
    def grid(self) -> GridSpec:
        return self.omega.grid

    @cached_property
    def v(self) -> VelocityField:
        return biot_savart(self.omega)

    def is_finite(self) -> bool:
        finite = bool(
            np.all(np.isfinite(self.omega.values)) and np.all(np.isfinite(self.rho.values))
        )
        if self.tracers is not None:
            finite = finite and bool(np.all(np.isfinite(self.tracers)))
        return finite

    def cfl(self, dt: float) -> float:
        return dt * self.v.max_speed() / self.grid.dx

    @classmethod
    def initial(
        cls, omega: ScalarField, rho: ScalarField, tracers: Optional[np.ndarray] = None
    ) -> "State":
        """Dealias the data and log the vorticity mass the cutoff removed"""
        omega_d, rho_d = dealias(omega), dealias(rho)
        removed = abs(omega.integral() - omega_d.integral())
        logger.debug("initial dealiasing removed vorticity mass {removed:.3e}", removed=removed)
        return cls(0.0, omega_d, rho_d, tracers)


def time_reversed(state: State) -> State:
    """(omega, rho, v) -> (-omega, rho, -v); integrating the result forward runs time backwards"""
    return State(state.t, -state.omega, state.rho, state.tracers, state.step)


def _advection(v: VelocityField, f: ScalarField) -> ScalarField:
    f1, f2 = spectral_derivative(f, 1), spectral_derivative(f, 2)
    return dealias(v.u1 * f1 + v.u2 * f2)


def rhs(state: State) -> Tuple[ScalarField, ScalarField]:
    """Return (d omega/dt, d rho/dt) = (-v.grad omega + d_1 rho, -v.grad rho)

    Raises:
        DivergenceError: Any non-finite value in the state or its tendencies

    Example:
        >>> domega, drho = rhs(State(0.0, ScalarField.zeros(grid), rho))
    """
    if not state.is_finite():
        raise DivergenceError(state.step, state.t)
    v = state.v
    domega = spectral_derivative(state.rho, 1) - _advection(v, state.omega)
    drho = -_advection(v, state.rho)
    if not (np.all(np.isfinite(domega.values)) and np.all(np.isfinite(drho.values))):
        raise DivergenceError(state.step, state.t)
    return domega, drho


def _tracer_velocity(state: State) -> Optional[np.ndarray]:
    if state.tracers is None or state.tracers.size == 0:
        return None if state.tracers is None else np.zeros((0, 2))
    v = state.v
    return np.column_stack(
        [PeriodicInterpolator(v.u1)(state.tracers), PeriodicInterpolator(v.u2)(state.tracers)]
    )


def _stage(state: State, dt: float, k_omega, k_rho, k_tracer) -> State:
    tracers = None if state.tracers is None else state.tracers + dt * k_tracer
    return State(
        state.t + dt, state.omega + dt * k_omega, state.rho + dt * k_rho, tracers, state.step
    )


def _rk4(state: State, dt: float) -> State:
    k = []
    stage = state
    for fraction in (0.0, 0.5, 0.5, 1.0):
        if k:
            stage = _stage(state, fraction * dt, *k[-1])
        domega, drho = rhs(stage)
        k.append((domega, drho, _tracer_velocity(stage)))
    weights = (1.0, 2.0, 2.0, 1.0)
    omega = state.omega + (dt / 6.0) * sum((w * ki[0] for w, ki in zip(weights, k)), 0.0)
    rho = state.rho + (dt / 6.0) * sum((w * ki[1] for w, ki in zip(weights, k)), 0.0)
    tracers = None
    if state.tracers is not None:
        tracers = state.tracers + (dt / 6.0) * sum(w * ki[2] for w, ki in zip(weights, k))
    new = State(state.t + dt, omega, rho, tracers, state.step + 1)
    if not new.is_finite():
        raise DivergenceError(state.step + 1, state.t, state)
    return new


def _advance(state: State, dt: float, cfg: SolverConfig, depth: int) -> State:
    cfl = state.cfl(dt)
    if cfl <= cfg.cfl_max:
        return _rk4(state, dt)
    if depth >= MAX_DT_HALVINGS:
        raise CFLViolationError(cfl, dt, cfg.cfl_max)
    logger.bind(step=state.step, t=state.t).warning(
        "CFL {cfl:.3f} above {cfl_max}; halving dt to {dt:.3e}",
        cfl=cfl,
        cfl_max=cfg.cfl_max,
        dt=dt / 2,
    )
    mid = _advance(state, 0.5 * dt, cfg, depth + 1)
    end = _advance(mid, 0.5 * dt, cfg, depth + 1)
    return replace(end, step=state.step + 1)


def step(state: State, cfg: SolverConfig, dt: Optional[float] = None) -> State:
    """Advance one RK4 step of size dt (default cfg.dt)

    A step breaking the CFL bound is replaced by two half steps, recursively
    up to MAX_DT_HALVINGS times, so the returned state is always at t + dt.

    Raises:
        CFLViolationError: The bound still fails after every halving
        DivergenceError: A stage produced non-finite values
    """
    try:
        return _advance(state, cfg.dt if dt is None else dt, cfg, 0)
    except DivergenceError as e:
        if e.last_state is None:
            e.last_state = state
        raise


class Diagnostics:
    """Builds a NormReport per snapshot and keeps the time accumulators

    V(t) = int ||grad v||_inf, int ||v||_LL and int W are accumulated by the
    trapezoidal rule between snapshots, with
    W = (||grad v||_{L(Sigma_t)} + ||omega||_{L^a and L^inf}) exp(int ||v||_LL).

    Args:
        grid: Simulation grid
        eps: Hölder index; holder norms of omega are reported at eps and eps - 1
        a: Integrability index of the L^a norms
        sample_pairs: Pairs for the log-Lipschitz estimator
        singular_slice: Tracer rows that are singular points (Sigma_t)
        h_grid: Scale grid of the L(Sigma) seminorm
        hooks: Callables (state, report) run after the built-in norms
        compute_ll: Disable to skip the log-Lipschitz sampling
    """

    def __init__(
        self,
        grid: GridSpec,
        eps: float = DEFAULT_EPS,
        a: float = DEFAULT_A,
        sample_pairs: int = DEFAULT_SAMPLE_PAIRS,
        singular_slice: slice = slice(0, 0),
        h_grid: Optional[Sequence[float]] = None,
        hooks: Sequence[Callable[[State, NormReport], None]] = (),
        compute_ll: bool = True,
    ):
        self.grid = grid
        self.eps = eps
        self.a = a
        self.sample_pairs = sample_pairs
        self.singular_slice = singular_slice
        self.h_grid = dyadic_scales(grid) if h_grid is None else np.asarray(h_grid)
        self.hooks = list(hooks)
        self.compute_ll = compute_ll
        self._previous: Optional[NormReport] = None
        self._warned_resolution = False

    def singular_points(self, state: State) -> np.ndarray:
        if state.tracers is None:
            return np.zeros((0, 2))
        return state.tracers[self.singular_slice]

    def snapshot(self, state: State) -> NormReport:
        v = state.v
        grad_v = v.gradient_norm()
        grad_v_field = ScalarField(self.grid, grad_v)
        g1, g2 = spectral_derivative(state.rho, 1), spectral_derivative(state.rho, 2)
        grad_rho = ScalarField(self.grid, np.hypot(g1.values, g2.values))

        report = NormReport(t=state.t, step=state.step)
        for p in (self.a, 2.0, math.inf):
            report.omega_lp[p] = state.omega.lp_norm(p)
            report.grad_rho_lp[p] = grad_rho.lp_norm(p)
        for p in (2.0, math.inf):
            report.rho_lp[p] = state.rho.lp_norm(p)
        report.holder[self.eps] = holder_norm(state.omega, self.eps)
        report.holder[self.eps - 1.0] = holder_norm(state.omega, self.eps - 1.0)
        report.grad_v_linf = float(np.max(grad_v))
        report.v_l2 = v.l2_norm()
        report.ll_norm = log_lipschitz_norm(v, self.sample_pairs) if self.compute_ll else 0.0
        report.l_sigma = l_sigma_norm(grad_v_field, self.singular_points(state), self.h_grid)

        report.tail_fraction = spectral_tail_fraction(state.omega)
        report.under_resolved = report.tail_fraction > UNDER_RESOLUTION_TAIL
        if report.under_resolved and not self._warned_resolution:
            self._warned_resolution = True
            logger.bind(step=state.step, t=state.t).warning(
                "vorticity spectral tail {tail:.2e} above {limit:.0e}; run is under-resolved",
                tail=report.tail_fraction,
                limit=UNDER_RESOLUTION_TAIL,
            )

        omega_la_linf = report.omega_lp[self.a] + report.omega_lp[math.inf]
        previous = self._previous
        if previous is None:
            report.ll_accum = 0.0
            report.v_accum = 0.0
        else:
            dt = state.t - previous.t
            report.ll_accum = previous.ll_accum + 0.5 * dt * (previous.ll_norm + report.ll_norm)
            report.v_accum = previous.v_accum + 0.5 * dt * (
                previous.grad_v_linf + report.grad_v_linf
            )
        report.w_value = (report.l_sigma + omega_la_linf) * math.exp(report.ll_accum)
        if previous is None:
            report.w_accum = 0.0
        else:
            dt = state.t - previous.t
            report.w_accum = previous.w_accum + 0.5 * dt * (previous.w_value + report.w_value)

        for hook in self.hooks:
            hook(state, report)
        self._previous = report
        logger.bind(step=state.step, t=state.t).diagnostic(
            "omega_inf={w:.4e} grad_v_inf={g:.4e} V={v:.4e} intW={iw:.4e}",
            w=report.omega_lp[math.inf],
            g=report.grad_v_linf,
            v=report.v_accum,
            iw=report.w_accum,
        )
        return report


@dataclass
class RunSeries:
    """Everything a run produced

    Attributes:
        reports: One NormReport per snapshot
        snapshots: States at the snapshot times
        history_times: Times of the stored vorticity samples
        history_omega: Vorticity samples feeding VelocityHistory
        final: Last state reached
        rho_bounds: (min, max) of the initial density
        completed: False when the run stopped on an error
    """

    reports: List[NormReport] = field(default_factory=list)
    snapshots: List[State] = field(default_factory=list)
    history_times: List[float] = field(default_factory=list)
    history_omega: List[ScalarField] = field(default_factory=list)
    final: Optional[State] = None
    rho_bounds: Tuple[float, float] = (0.0, 0.0)
    completed: bool = True

    @property
    def times(self) -> np.ndarray:
        return np.array([r.t for r in self.reports])

    def energy_bound_slack(self) -> float:
        """min over snapshots of ||v_0||_2 + t ||rho_0||_2 - ||v(t)||_2"""
        if not self.reports:
            return 0.0
        v0 = self.reports[0].v_l2
        rho0 = self.reports[0].rho_lp[2.0]
        return min(v0 + r.t * rho0 - r.v_l2 for r in self.reports)

    def rho_overshoot(self) -> float:
        """Largest excursion of rho outside [min rho_0, max rho_0], relative to the range"""
        low, high = self.rho_bounds
        scale = max(high - low, abs(high), abs(low), 1e-300)
        worst = 0.0
        for state in self.snapshots:
            worst = max(
                worst,
                float(np.max(state.rho.values)) - high,
                low - float(np.min(state.rho.values)),
            )
        return worst / scale

    def to_dict(self) -> Dict[str, float]:
        return {
            "snapshots": len(self.reports),
            "t_final": self.final.t if self.final is not None else 0.0,
            "energy_bound_slack": self.energy_bound_slack(),
            "rho_overshoot": self.rho_overshoot(),
            "completed": self.completed,
        }


def run(
    initial: State,
    cfg: SolverConfig,
    diagnostics: Optional[Diagnostics] = None,
    scenario: str = "",
) -> RunSeries:
    """Integrate to cfg.t_end, snapshotting every cfg.diagnostics_every steps

    Raises:
        DivergenceError / CFLViolationError: with ``partial`` set to the
            series recorded so far
    """
    diagnostics = diagnostics or Diagnostics(initial.grid)
    log = logger.bind(scenario=scenario)
    series = RunSeries(
        rho_bounds=(float(np.min(initial.rho.values)), float(np.max(initial.rho.values)))
    )
    n_steps = cfg.n_steps
    log.info("integrating {n} steps of dt={dt} to t={t_end}", n=n_steps, dt=cfg.dt, t_end=cfg.t_end)

    def record(state: State) -> None:
        series.reports.append(diagnostics.snapshot(state))
        series.snapshots.append(state)

    def keep_history(state: State) -> None:
        series.history_times.append(state.t)
        series.history_omega.append(state.omega)

    state = initial
    record(state)
    keep_history(state)
    try:
        for i in range(1, n_steps + 1):
            state = step(state, cfg)
            # round-off free clock
            state = replace(state, t=i * cfg.dt, step=i)
            if i % cfg.history_every == 0 or i == n_steps:
                keep_history(state)
            if i % cfg.diagnostics_every == 0 or i == n_steps:
                record(state)
    except (DivergenceError, CFLViolationError) as e:
        series.final = state
        series.completed = False
        e.partial = series
        log.bind(step=state.step, t=state.t).error("run aborted: {error}", error=str(e))
        raise
    series.final = state
    log.success("run finished at t={t}", t=state.t)
    return series
