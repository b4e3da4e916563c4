"""
Executable checks of the a priori estimates

Every ``check_*`` function is a pure function of recorded run data and
returns a CheckReport. Non-explicit constants go through a two-phase
protocol: ``calibrate`` fits a constant (with a safety margin) on a
calibration corpus, ``assert_fit`` asserts it on held-out data.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from scipy.integrate import cumulative_trapezoid, trapezoid

from .constants import (
    CALIBRATION_MARGIN,
    DEFAULT_A,
    DEFAULT_EPS,
    DEFAULT_SEED,
    LP_PROFILE_TAG,
    SIGMA_QUADRATURE_POINTS,
    SIGMA_TOLERANCE,
    TWIN_DELTAS,
    TWIN_THETA_MIN,
    TWIN_THETA_TOLERANCE,
)
from .dyadic_analyzer import (
    NormReport,
    conormal_norm_detail,
    directional_derivative,
    distance_to_points,
    holder_norm,
    low_frequency,
    max_block_index,
    vector_holder_norm,
)
from .exceptions import ConfigurationError, DomainError, FitError
from .logger import logger
from .profiles import bump, gaussian_ring
from .report import CheckReport, CheckRow
from .spectral_core import (
    GridSpec,
    ScalarField,
    VelocityField,
    biot_savart,
    dealias,
    leray_project,
    spectral_derivative,
)

Array = np.ndarray


@dataclass
class EstimateFit:
    """A calibrated constant and its provenance

    Attributes:
        check_id: Inequality id
        constant: Fitted C (margin included)
        constant0: Fitted C0 where the inequality has one
        corpus: Calibration corpus id
        seed: Seed of the calibration corpus
        margin: Safety factor applied to the largest observed ratio
        samples: Number of calibration ratios
        held_out_min_slack: Smallest slack seen by ``assert_fit``
        violations: Held-out violations seen by ``assert_fit``
        profile: Littlewood-Paley profile the constant belongs to
    """

    check_id: str
    constant: float
    constant0: Optional[float] = None
    corpus: str = ""
    seed: int = DEFAULT_SEED
    margin: float = CALIBRATION_MARGIN
    samples: int = 0
    held_out_min_slack: float = math.inf
    violations: int = 0
    profile: str = LP_PROFILE_TAG

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EstimateFit":
        values = dict(data)
        for key in ("constant", "margin", "held_out_min_slack"):
            values[key] = float(values[key])
        if values.get("constant0") is not None:
            values["constant0"] = float(values["constant0"])
        return cls(**values)


def calibrate(
    check_id: str,
    ratios: Sequence[float],
    seed: int = DEFAULT_SEED,
    corpus: str = "",
    margin: float = CALIBRATION_MARGIN,
    constant0: Optional[float] = None,
) -> EstimateFit:
    """C = margin * max(ratios) over the finite ratios of the corpus

    Raises:
        FitError: No finite ratio to fit on
    """
    values = np.asarray([r for r in ratios if math.isfinite(r)], dtype=np.float64)
    if values.size == 0:
        raise FitError(f"no finite calibration ratios for {check_id}")
    fit = EstimateFit(
        check_id,
        margin * float(max(values.max(), 0.0)),
        constant0,
        corpus,
        seed,
        margin,
        int(values.size),
    )
    logger.info(
        "calibrated {check}: C={c:.4g} from {k} ratios (corpus {corpus!r}, seed {seed})",
        check=check_id,
        c=fit.constant,
        k=fit.samples,
        corpus=corpus,
        seed=seed,
    )
    return fit


def assert_fit(
    fit: EstimateFit, ratios: Sequence[float], times: Optional[Sequence[float]] = None
) -> CheckReport:
    """Compare held-out ratios against a fitted constant; updates the fit's margin statistics"""
    times = list(times) if times is not None else [math.nan] * len(ratios)
    report = check_inequality(fit.check_id, times, ratios, [fit.constant] * len(ratios))
    report.mode = "assert"
    report.constant = fit.constant
    fit.held_out_min_slack = min(fit.held_out_min_slack, report.min_slack)
    fit.violations += sum(not row.passed for row in report.rows)
    return report


def check_inequality(
    check_id: str,
    times: Sequence[float],
    lhs: Sequence[float],
    rhs: Sequence[float],
    p: Optional[Sequence[float]] = None,
    rel_tol: float = 0.0,
) -> CheckReport:
    """One row per (t, lhs, rhs) triple; passes when lhs <= rhs (1 + rel_tol)"""
    report = CheckReport(check_id)
    labels = list(p) if p is not None else [math.nan] * len(lhs)
    for t, left, right, label in zip(times, lhs, rhs, labels):
        report.add(
            CheckRow.compare(check_id, t, left, right, p=label, tolerance=rel_tol * abs(right))
        )
    return report


def _log(report: CheckReport) -> CheckReport:
    violation = report.first_violation()
    if violation is None:
        logger.success(
            "check {check} passed ({k} rows, min slack {s:.3e})",
            check=report.check_id,
            k=len(report.rows),
            s=report.min_slack,
        )
    else:
        logger.error(
            "check {check} failed at t={t:.6g} p={p}: {lhs:.6e} > {rhs:.6e}",
            check=report.check_id,
            t=violation.t,
            p=violation.p,
            lhs=violation.lhs,
            rhs=violation.rhs,
        )
    return report


def _recorded(reports: Sequence[NormReport], name: str, p_list: Sequence[float]) -> None:
    missing = [p for p in p_list if p not in getattr(reports[0], name)]
    if missing:
        raise DomainError(f"{name} not recorded for p in {missing}")


def _required_constant(excess: float, base: float, exponent_unit: float) -> float:
    """Smallest C with excess <= base * (exp(C * exponent_unit) - 1)"""
    if excess <= 0.0:
        return 0.0
    if base <= 0.0 or exponent_unit <= 0.0:
        return math.inf
    return math.log1p(excess / base) / exponent_unit


def check_lp_bounds(
    reports: Sequence[NormReport],
    p_list: Sequence[float],
    C: float,
    omega_tol: float = 1e-2,
    rho_tol: float = 1e-6,
) -> CheckReport:
    """||omega(t)||_p <= ||omega0||_p + ||grad rho0||_p e^{C V(t)} t
    and ||grad rho(t)||_p <= ||grad rho0||_p e^{C V(t)}

    Rows are labelled lp_bounds.omega and lp_bounds.rho; ``p`` holds the index.
    ``omega_tol`` is relative to ||omega0||_p and absorbs the discrete
    overshoot of the mollified patch.
    """
    _recorded(reports, "omega_lp", p_list)
    first = reports[0]
    report = CheckReport("lp_bounds", constant=C, mode="assert")
    for r in reports:
        growth = math.exp(C * r.v_accum)
        for p in p_list:
            tol_w = omega_tol * first.omega_lp[p]
            tol_r = rho_tol * max(first.grad_rho_lp[p], 1e-300)
            rhs_w = first.omega_lp[p] + first.grad_rho_lp[p] * growth * r.t
            rhs_r = first.grad_rho_lp[p] * growth
            report.add(CheckRow.compare("lp_bounds.omega", r.t, r.omega_lp[p], rhs_w, p, tol_w))
            report.add(CheckRow.compare("lp_bounds.rho", r.t, r.grad_rho_lp[p], rhs_r, p, tol_r))
    return _log(report)


def lp_bound_ratios(
    reports: Sequence[NormReport],
    p_list: Sequence[float],
    omega_tol: float = 1e-2,
    rho_tol: float = 1e-6,
) -> List[float]:
    """Smallest C making each lp_bounds row hold, for calibration"""
    _recorded(reports, "omega_lp", p_list)
    first = reports[0]
    ratios = []
    for r in reports[1:]:
        for p in p_list:
            g0 = first.grad_rho_lp[p]
            excess_w = r.omega_lp[p] - (1.0 + omega_tol) * first.omega_lp[p] - g0 * r.t
            ratios.append(_required_constant(excess_w, g0 * r.t, r.v_accum))
            excess_r = r.grad_rho_lp[p] - (1.0 + rho_tol) * g0
            ratios.append(_required_constant(excess_r, g0, r.v_accum))
    return ratios


def _grad_v_lp(omega: ScalarField, p: float) -> float:
    return ScalarField(omega.grid, biot_savart(omega).gradient_norm()).lp_norm(p)


def _check_p(p_list: Sequence[float]) -> None:
    bad = [p for p in p_list if not (1.0 < p < math.inf)]
    if bad:
        raise DomainError(f"Calderon-Zygmund indices must lie in (1, inf), got {bad}")


def cz_ratios(omega: ScalarField, p_list: Sequence[float]) -> List[float]:
    """||grad v||_p (p - 1) / (p^2 ||omega||_p)"""
    _check_p(p_list)
    out = []
    for p in p_list:
        w = omega.lp_norm(p)
        out.append(_grad_v_lp(omega, p) * (p - 1.0) / (p * p * w) if w > 0.0 else 0.0)
    return out


def check_cz(omega: ScalarField, p_list: Sequence[float], C: float, t: float = 0.0) -> CheckReport:
    """||grad v||_p <= C p^2 / (p - 1) ||omega||_p"""
    _check_p(p_list)
    report = CheckReport("cz", constant=C, mode="assert")
    for p in p_list:
        rhs = C * p * p / (p - 1.0) * omega.lp_norm(p)
        report.add(CheckRow.compare("cz", t, _grad_v_lp(omega, p), rhs, p, 1e-12 * rhs))
    return _log(report)


@dataclass(frozen=True)
class LogEstimateTerms:
    """Both sides of the logarithmic gradient estimate without the constant

    The bound reads lhs <= C * (lebesgue + log_term).
    """

    lhs: float
    lebesgue: float
    log_term: float
    conormal: float
    omega_linf: float

    @property
    def ratio(self) -> float:
        total = self.lebesgue + self.log_term
        return self.lhs / total if total > 0.0 else 0.0


def log_estimate_terms(
    omega: ScalarField,
    family: Any,
    sigma_eta: Optional[Array],
    eps: float = DEFAULT_EPS,
    a: float = DEFAULT_A,
) -> LogEstimateTerms:
    """Masked ||grad v||_inf and the two terms of the logarithmic bound

    lebesgue = a ||omega||_a and
    log_term = (1/eps) ||omega||_inf log(e + conormal / ||omega||_inf).
    """
    grad = biot_savart(omega).gradient_norm()
    if sigma_eta is not None:
        grad = np.where(sigma_eta, 0.0, grad)
    lhs = float(np.max(grad))
    omega_inf = omega.max_abs()
    if omega_inf == 0.0:
        return LogEstimateTerms(lhs, 0.0, 0.0, 0.0, 0.0)
    detail = conormal_norm_detail(omega, family, sigma_eta, eps)
    log_term = omega_inf / eps * math.log(math.e + detail.value / omega_inf)
    return LogEstimateTerms(lhs, a * omega.lp_norm(a), log_term, detail.value, omega_inf)


def check_log_estimate(
    omega: ScalarField,
    family: Any,
    sigma_eta: Optional[Array],
    eps: float,
    a: float,
    C: float,
    t: float = 0.0,
) -> CheckReport:
    """Logarithmic gradient estimate outside sigma_eta

    ||grad v||_{L^inf(Sigma)}
        <= C a ||omega||_a + (C/eps) ||omega||_inf log(e + ||omega||^eps_{Sigma,X} / ||omega||_inf)

    Raises:
        DegeneracyError: The family vanishes outside sigma_eta
    """
    terms = log_estimate_terms(omega, family, sigma_eta, eps, a)
    report = CheckReport("log_estimate", constant=C, mode="assert")
    rhs = C * (terms.lebesgue + terms.log_term)
    report.add(CheckRow.compare("log_estimate", t, terms.lhs, rhs))
    report.notes.update({"conormal": terms.conormal, "ratio": terms.ratio})
    return _log(report)


def lifespan_bound(omega_norm: float, grad_rho_inf: float, C: float, C0: float) -> float:
    """Explicit lifespan lower bound

    T = 1/(C A) log(1 + A/(A C0 + 1) log(1 + C min(A, A^2)/||grad rho0||_inf)),
    A = ||omega0||_{L^a and L^inf}. Infinite for a constant density.

    Example:
        >>> lifespan_bound(1.0, 1.0, 1.0, 1.0)
        0.29754...

    Raises:
        DomainError: Nonpositive norm or constant, or negative gradient norm
    """
    violations = [
        f"{name} = {value} must be positive"
        for name, value in (("||omega0||", omega_norm), ("C", C), ("C0", C0))
        if not value > 0.0
    ]
    if grad_rho_inf < 0.0 or math.isnan(grad_rho_inf):
        violations.append(f"||grad rho0||_inf = {grad_rho_inf} must be nonnegative")
    if violations:
        raise DomainError("; ".join(violations))
    if grad_rho_inf == 0.0:
        return math.inf
    A = omega_norm
    inner = math.log1p(C * min(A, A * A) / grad_rho_inf)
    return math.log1p(A / (A * C0 + 1.0) * inner) / (C * A)


def smooth_lifespan_condition(
    T: float,
    grad_rho_inf: float,
    omega_la_linf: float,
    omega_l1_linf: float,
    C: float,
    C0: float,
) -> CheckRow:
    """Small-data condition of the smooth case

    T ||grad rho0||_inf exp((C0 + T)(e^{C A T} - 1)) <= min(1, ||omega0||_{L^1 and L^inf})
    """
    try:
        lhs = T * grad_rho_inf * math.exp((C0 + T) * math.expm1(C * omega_la_linf * T))
    except OverflowError:
        lhs = math.inf
    return CheckRow.compare("lifespan.smooth", T, lhs, min(1.0, omega_l1_linf))


def singular_lifespan_bound(
    grad_rho_inf: float,
    omega_la_linf: float,
    omega_l1_linf: float,
    plateau_radius: float,
    C: float,
    C0: float,
) -> float:
    """Lifespan of the singular case

    T solves T ||grad rho0||_inf r^{-(C0 + T) exp(e^{C A T})} = min(1, ||omega0||_{L^1 and L^inf})

    The left side increases in T, so the root is unique; it is bracketed by
    doubling and refined with Brent's method.

    Raises:
        DomainError: r outside (0, 1) or nonpositive data
    """
    if not 0.0 < plateau_radius < 1.0:
        raise DomainError(f"plateau radius {plateau_radius} outside (0, 1)")
    if not (omega_la_linf > 0.0 and omega_l1_linf > 0.0 and C > 0.0 and C0 >= 0.0):
        raise DomainError("singular lifespan needs positive norms and constants")
    if grad_rho_inf <= 0.0:
        return math.inf
    target = math.log(min(1.0, omega_l1_linf))
    neg_log_r = -math.log(plateau_radius)

    def excess(T: float) -> float:
        try:
            growth = (C0 + T) * math.exp(math.exp(C * omega_la_linf * T)) * neg_log_r
        except OverflowError:
            return math.inf
        return math.log(T) + math.log(grad_rho_inf) + growth - target

    hi = 1.0
    while excess(hi) < 0.0:
        hi *= 2.0
    lo = hi
    while excess(lo) > 0.0:
        lo *= 0.5
    root = hi if lo == hi else float(optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-12))
    logger.info(
        "singular lifespan root T={T:.6e} bracketed in [{lo:.3e}, {hi:.3e}]", T=root, lo=lo, hi=hi
    )
    return root


def check_lifespan(
    reports: Sequence[NormReport], a: float, C: float, C0: float, completed: bool
) -> CheckReport:
    """The run stays Lipschitz-bounded (finite V) up to min(t_end, T)"""
    first = reports[0]
    T = lifespan_bound(
        first.omega_lp[a] + first.omega_lp[math.inf], first.grad_rho_lp[math.inf], C, C0
    )
    report = CheckReport("lifespan", constant=C, mode="assert")
    for r in reports:
        if r.t > T:
            break
        report.add(CheckRow.compare("lifespan", r.t, 0.0 if math.isfinite(r.v_accum) else 1.0, 0.0))
    if not completed and reports[-1].t < T:
        report.add(CheckRow.compare("lifespan", reports[-1].t, 1.0, 0.0))
    report.notes.update({"T": T, "C0": C0})
    return _log(report)


def check_plateau_density_bound(
    reports: Sequence[NormReport],
    r: float,
    C: float,
    p_list: Optional[Sequence[float]] = None,
    rel_tol: float = 1e-6,
) -> CheckReport:
    """||grad rho(t)||_p <= ||grad rho0||_p r^{-C int W} and
    ||omega(t)||_p <= ||omega0||_p + t ||grad rho0||_p r^{-C int W}"""
    first = reports[0]
    p_list = sorted(first.grad_rho_lp) if p_list is None else list(p_list)
    _recorded(reports, "grad_rho_lp", p_list)
    report = CheckReport("plateau_density", constant=C, mode="assert")
    for rep in reports:
        factor = r ** (-C * rep.w_accum)
        for p in p_list:
            g0 = first.grad_rho_lp[p]
            rhs_rho = g0 * factor
            rhs_w = first.omega_lp[p] + rep.t * g0 * factor
            report.add(
                CheckRow.compare(
                    "plateau_density.rho", rep.t, rep.grad_rho_lp[p], rhs_rho, p, rel_tol * g0
                )
            )
            report.add(
                CheckRow.compare(
                    "plateau_density.omega", rep.t, rep.omega_lp[p], rhs_w, p, rel_tol * rhs_w
                )
            )
    return _log(report)


def plateau_density_ratios(reports: Sequence[NormReport], r: float) -> List[float]:
    """Smallest C making each plateau_density row hold"""
    first = reports[0]
    neg_log_r = -math.log(r)
    ratios = []
    for rep in reports[1:]:
        for p, g0 in first.grad_rho_lp.items():
            unit = neg_log_r * rep.w_accum
            ratios.append(_required_constant(rep.grad_rho_lp[p] - g0, g0, unit))
            excess = rep.omega_lp[p] - first.omega_lp[p] - rep.t * g0
            ratios.append(_required_constant(excess, rep.t * g0, unit))
    return ratios


@dataclass(frozen=True)
class StationarySigma:
    """Radial stationary field and its residuals

    Attributes:
        sigma: The velocity field
        residual: ||P(sigma . grad sigma)||_{L^2}
        relative_residual: residual / ||sigma||_{L^2}^2
        curl_error: max |curl sigma - g(|x|)|
    """

    sigma: VelocityField
    residual: float
    relative_residual: float
    curl_error: float


def balanced_ring_profile(
    inner: Tuple[float, float] = (1.0, 2.0), outer: Tuple[float, float] = (3.0, 4.0)
) -> Callable[[Array], Array]:
    """g = bump(inner) - c bump(outer) with c chosen so that int r g(r) dr = 0"""
    r = np.linspace(0.0, outer[1], 1 << 14)
    m_in = float(trapezoid(r * bump(r, *inner), r))
    m_out = float(trapezoid(r * bump(r, *outer), r))
    c = m_in / m_out
    return lambda s: bump(s, *inner) - c * bump(s, *outer)


def balanced_gaussian_rings(
    inner: Tuple[float, float], outer: Tuple[float, float]
) -> Callable[[Array], Array]:
    """g = ring(inner) - c ring(outer) for (center, width) Gaussian rings, int r g(r) dr = 0"""
    r = np.linspace(0.0, outer[0] + 12.0 * outer[1], 1 << 14)
    m_in = float(trapezoid(r * gaussian_ring(r, *inner), r))
    m_out = float(trapezoid(r * gaussian_ring(r, *outer), r))
    c = m_in / m_out
    return lambda s: gaussian_ring(s, *inner) - c * gaussian_ring(s, *outer)


def box_sigma_profile(length: float) -> Callable[[Array], Array]:
    """Balanced Gaussian rings at 0.1 L and 0.25 L, width 0.02 L"""
    width = 0.02 * length
    return balanced_gaussian_rings((0.1 * length, width), (0.25 * length, width))


def stationary_sigma(
    g: Callable[[Array], Array], grid: GridSpec, quadrature_points: int = SIGMA_QUADRATURE_POINTS
) -> StationarySigma:
    """sigma(x) = x_perp / |x|^2 int_0^|x| s g(s) ds and its stationarity residual

    Raises:
        DomainError: The profile's total integral is not zero (the 1/|x| tail
            cannot be represented on the torus)
    """
    x1, x2 = grid.coordinates()
    radius = np.hypot(x1, x2)
    s = np.linspace(0.0, float(radius.max()) * (1.0 + 1e-9), quadrature_points)
    weight = s * np.asarray(g(s), dtype=np.float64)
    cumulative = cumulative_trapezoid(weight, s, initial=0.0)
    scale = float(trapezoid(np.abs(weight), s))
    # values past half the box leak through the periodic images
    tail = float(np.max(np.abs(cumulative[s >= 0.5 * grid.length]), initial=0.0))
    if tail > 1e-8 * max(scale, 1e-300):
        raise DomainError(
            f"profile has total integral {cumulative[-1]:.3e}; sigma would decay like 1/|x|,"
            " which is not periodic. Balance the profile so int r g(r) dr = 0"
        )
    enclosed = np.interp(radius, s, cumulative)
    safe = np.where(radius > 0.0, radius, 1.0)
    factor = np.where(radius > 0.0, enclosed / safe**2, 0.0)
    sigma = VelocityField(
        ScalarField(grid, -x2 * factor), ScalarField(grid, x1 * factor), provenance="sigma"
    )
    adv = [
        dealias(sigma.u1 * spectral_derivative(u, 1) + sigma.u2 * spectral_derivative(u, 2))
        for u in (sigma.u1, sigma.u2)
    ]
    residual = leray_project(VelocityField(adv[0], adv[1])).l2_norm()
    energy = sigma.l2_norm() ** 2
    curl_error = float(np.max(np.abs(sigma.curl().values - np.asarray(g(radius)))))
    return StationarySigma(
        sigma, residual, residual / energy if energy > 0.0 else 0.0, curl_error
    )


def check_stationary_sigma(
    grid: GridSpec,
    g: Optional[Callable[[Array], Array]] = None,
    tolerance: float = SIGMA_TOLERANCE,
) -> CheckReport:
    """Stationarity residual and curl recovery of sigma against ``tolerance``

    The profile defaults to box_sigma_profile(grid.length).
    """
    profile = box_sigma_profile(grid.length) if g is None else g
    result = stationary_sigma(profile, grid)
    report = CheckReport("stationary_sigma", mode="assert")
    report.add(
        CheckRow.compare("stationary_sigma.residual", 0.0, result.relative_residual, tolerance)
    )
    report.add(CheckRow.compare("stationary_sigma.curl", 0.0, result.curl_error, tolerance))
    report.notes.update(
        residual=result.residual,
        relative_residual=result.relative_residual,
        curl_error=result.curl_error,
    )
    return _log(report)


def compact_mollifier_weights(grid: GridSpec, n: float) -> Tuple[List[Tuple[int, int]], Array]:
    """Grid offsets and weights of phi_n = n^2 phi(n x), normalized to sum 1

    Raises:
        DomainError: The support radius 1/n is below one grid spacing
    """
    support = 1.0 / n
    if support < grid.dx:
        raise DomainError(
            f"mollifier radius 1/n = {support:.4g} below the grid spacing {grid.dx:.4g}"
        )
    reach = int(math.ceil(support / grid.dx))
    offsets, weights = [], []
    for i in range(-reach, reach + 1):
        for j in range(-reach, reach + 1):
            d = math.hypot(i, j) * grid.dx * n
            if d < 1.0:
                offsets.append((i, j))
                weights.append(float(bump(d, -1.0, 1.0)))
    weights = np.asarray(weights)
    return offsets, weights / weights.sum()


def compact_mollify(f: ScalarField, n: float) -> ScalarField:
    """phi_n * f, computed as f + sum w (f(x - y) - f(x)) so constants are kept bit-exactly"""
    offsets, weights = compact_mollifier_weights(f.grid, n)
    base = f.values
    acc = np.zeros_like(base)
    for (i, j), w in zip(offsets, weights):
        acc += w * (np.roll(base, (i, j), axis=(0, 1)) - base)
    return ScalarField(f.grid, base + acc)


def spectral_cutoff(f: ScalarField, n: int) -> ScalarField:
    """S_n f"""
    return low_frequency(f, int(n))


MOLLIFIERS = {"spectral_cutoff": spectral_cutoff, "compact_mollifier": compact_mollify}


def _mollifier(mode: str) -> Callable[[ScalarField, float], ScalarField]:
    if mode not in MOLLIFIERS:
        raise ConfigurationError(
            "invalid mollifier", [f"mode = {mode!r} is not one of {', '.join(MOLLIFIERS)}"]
        )
    return MOLLIFIERS[mode]


def commutator_ratio_mollified(
    x: VelocityField, f: ScalarField, n: float, eps: float, mode: str = "compact_mollifier"
) -> float:
    """||[d_X, R_n] f||_eps / (||X||_eps ||grad f||_inf)"""
    mollify = _mollifier(mode)
    commutator = directional_derivative(mollify(f, n), x) - mollify(directional_derivative(f, x), n)
    g1, g2 = spectral_derivative(f, 1), spectral_derivative(f, 2)
    denominator = vector_holder_norm(x, eps) * float(np.max(np.hypot(g1.values, g2.values)))
    return holder_norm(commutator, eps) / denominator if denominator > 0.0 else 0.0


def random_pairs(grid: GridSpec, count: int, seed: int = DEFAULT_SEED, modes: int = 4):
    """Band-limited random (X, f) pairs from a seeded generator"""
    rng = np.random.default_rng(seed)
    x1, x2 = grid.coordinates()
    k = 2.0 * np.pi / grid.length

    def random_field() -> Array:
        acc = np.zeros_like(x1)
        for m1 in range(-modes, modes + 1):
            for m2 in range(-modes, modes + 1):
                a, b = rng.normal(size=2) / (1.0 + m1 * m1 + m2 * m2)
                phase = k * (m1 * x1 + m2 * x2)
                acc += a * np.cos(phase) + b * np.sin(phase)
        return acc

    pairs = []
    for _ in range(count):
        x = VelocityField(ScalarField(grid, random_field()), ScalarField(grid, random_field()))
        pairs.append((x, ScalarField(grid, random_field())))
    return pairs


def commutator_report(
    pairs: Sequence[Tuple[VelocityField, ScalarField]],
    n_list: Sequence[float],
    eps: float = DEFAULT_EPS,
    mode: str = "compact_mollifier",
    C: Optional[float] = None,
) -> CheckReport:
    """Commutator ratios over n and (X, f) pairs; asserted against C when given

    Rows carry p = n. With C None the report is in fit mode and the
    constant is calibrated from the ratios.
    """
    ratios, labels = [], []
    for n in n_list:
        for x, f in pairs:
            ratios.append(commutator_ratio_mollified(x, f, n, eps, mode))
            labels.append(float(n))
    mode_name = "fit" if C is None else "assert"
    if C is None:
        C = calibrate("commutator", ratios).constant
    report = check_inequality("commutator", [0.0] * len(ratios), ratios, [C] * len(ratios), labels)
    report.mode = mode_name
    report.constant = C
    report.notes["max_ratio"] = max(ratios, default=0.0)
    return _log(report)


@dataclass
class MollifiedData:
    """Approximate initial data and the plateau / commutator checks

    Attributes:
        v: Regularized velocity
        rho: Regularized density
        report: plateau rows (and commutator rows when pairs were given)
    """

    v: VelocityField
    rho: ScalarField
    report: CheckReport = field(default_factory=lambda: CheckReport("mollify_init"))


def default_mollify_level(grid: GridSpec, mode: str = "compact_mollifier") -> float:
    """Finest level the grid resolves: support 2 dx, or the top dyadic block"""
    if mode == "spectral_cutoff":
        return float(max_block_index(grid))
    return 1.0 / (2.0 * grid.dx)


def mollify_init(
    v0: VelocityField,
    rho0: ScalarField,
    n: float,
    mode: str = "compact_mollifier",
    singular_set: Optional[Array] = None,
    plateau_radius: float = 0.0,
    pairs: Optional[Sequence[Tuple[VelocityField, ScalarField]]] = None,
    eps: float = DEFAULT_EPS,
) -> MollifiedData:
    """Regularize (v0, rho0) at level n

    spectral_cutoff applies S_n to both; compact_mollifier convolves with
    phi_n. The density plateau is certified on (Sigma_0)_{r - 1/n}.

    Raises:
        DomainError: 1/n >= r/2 with a nonempty singular set
    """
    mollify = _mollifier(mode)
    points = np.zeros((0, 2)) if singular_set is None else np.asarray(singular_set).reshape(-1, 2)
    if points.shape[0] and 1.0 / n >= 0.5 * plateau_radius:
        raise DomainError(
            f"1/n = {1.0 / n:.4g} is not below r/2 = {0.5 * plateau_radius:.4g};"
            " the plateau cannot be certified"
        )
    v = VelocityField(mollify(v0.u1, n), mollify(v0.u2, n), provenance=f"{mode}:{n}")
    rho = mollify(rho0, n)
    report = CheckReport("mollify_init", mode="assert")
    if points.shape[0]:
        inner = distance_to_points(rho0.grid, points) < plateau_radius - 1.0 / n
        drift = float(np.max(np.abs(rho.values - rho0.values)[inner], initial=0.0))
        tolerance = 0.0 if mode == "compact_mollifier" else 1e-3 * max(rho0.max_abs(), 1e-300)
        report.add(CheckRow.compare("mollify_init.plateau", 0.0, drift, tolerance, p=n))
    if pairs:
        sub = commutator_report(pairs, [n], eps, mode)
        report.rows.extend(sub.rows)
        report.notes["commutator_constant"] = sub.constant
    return MollifiedData(v, rho, report)


def default_perturbation(state: Any, delta: float) -> Any:
    """(omega, rho) -> ((1 + delta) omega, rho + delta exp(-|x|^2))"""
    from .boussinesq_solver import State

    x1, x2 = state.grid.coordinates()
    bumped = ScalarField(state.grid, np.exp(-(x1**2 + x2**2)))
    return State.initial((1.0 + delta) * state.omega, state.rho + delta * bumped, state.tracers)


@dataclass
class TwinResult:
    """Perturbation decay of a twin experiment

    Attributes:
        times: Snapshot times
        deltas: Perturbation sizes
        distances: D(t) per delta, shape (len(deltas), len(times))
        theta: Fitted decay exponent per time
        determinism: max D(t) of the delta = 0 twin
        report: Exponent, decay and determinism rows
    """

    times: Array
    deltas: Array
    distances: Array
    theta: Array
    determinism: float
    report: CheckReport

    def to_dict(self) -> Dict[str, Any]:
        return {
            "times": self.times.tolist(),
            "deltas": self.deltas.tolist(),
            "distances": self.distances.tolist(),
            "theta": self.theta.tolist(),
            "determinism": self.determinism,
            "report": self.report.to_dict(),
        }


def twin_distance(a: Any, b: Any) -> float:
    """(||v_a - v_b||_2^2 + ||rho_a - rho_b||_2^2)^(1/2)"""
    dv = VelocityField(a.v.u1 - b.v.u1, a.v.u2 - b.v.u2).l2_norm()
    drho = (a.rho - b.rho).lp_norm(2.0)
    return math.hypot(dv, drho)


def _decay_ratio(column: Array) -> float:
    """Largest D(delta_{i+1}) / D(delta_i); 1 when a distance vanishes"""
    worst = 0.0
    for larger, smaller in zip(column[:-1], column[1:]):
        if larger <= 0.0:
            return 1.0
        worst = max(worst, smaller / larger)
    return worst


def uniqueness_twin_experiment(
    initial: Any,
    cfg: Any,
    deltas: Sequence[float] = TWIN_DELTAS,
    perturb: Callable[[Any, float], Any] = default_perturbation,
    threshold: float = TWIN_THETA_MIN,
    assert_until: Optional[float] = None,
    tolerance: float = TWIN_THETA_TOLERANCE,
) -> TwinResult:
    """Measure D(t) between a reference run and runs from perturbed data

    theta(t) is the slope of log D(t) against log delta. The report holds
    these rows:

        uniqueness: theta(t) >= threshold for t <= assert_until
            (half of cfg.t_end by default)
        uniqueness.osgood: theta(t) <= 1
        uniqueness.monotone: theta(t) does not grow between snapshots
        uniqueness.decay: D(t) shrinks strictly with every smaller delta
        uniqueness.determinism: the delta = 0 twin reproduces the reference

    The osgood and monotone rows allow ``tolerance``.

    Raises:
        DomainError: Fewer than two deltas, or deltas that are not positive
            and distinct
    """
    from .boussinesq_solver import Diagnostics, run

    deltas = sorted((float(d) for d in deltas), reverse=True)
    if len(deltas) < 2 or deltas[-1] <= 0.0 or len(set(deltas)) != len(deltas):
        raise DomainError(f"twin deltas {deltas} must be at least two distinct positive values")

    def trajectory(state: Any) -> List[Any]:
        diagnostics = Diagnostics(state.grid, compute_ll=False)
        return run(state, cfg, diagnostics, scenario="twin").snapshots

    reference = trajectory(perturb(initial, 0.0))
    twin = trajectory(perturb(initial, 0.0))
    determinism = max(twin_distance(a, b) for a, b in zip(reference, twin))
    times = np.array([s.t for s in reference])
    distances = np.array(
        [
            [twin_distance(a, b) for a, b in zip(reference, trajectory(perturb(initial, d)))]
            for d in deltas
        ]
    )
    log_d = np.log(np.asarray(deltas, dtype=np.float64))
    theta = np.array(
        [
            float(np.polyfit(log_d, np.log(np.maximum(distances[:, k], 1e-300)), 1)[0])
            for k in range(len(times))
        ]
    )
    report = CheckReport("uniqueness", mode="assert")
    limit = 0.5 * cfg.t_end if assert_until is None else assert_until
    for k, (t, value) in enumerate(zip(times, theta)):
        if t <= limit + 1e-12:
            report.add(CheckRow.compare("uniqueness", t, threshold, value))
        report.add(CheckRow.compare("uniqueness.osgood", t, value, 1.0, tolerance=tolerance))
        if k:
            report.add(
                CheckRow.compare("uniqueness.monotone", t, value, theta[k - 1], tolerance=tolerance)
            )
        ratio = _decay_ratio(distances[:, k])
        report.add(
            CheckRow("uniqueness.decay", float(t), math.nan, ratio, 1.0, 1.0 - ratio, ratio < 1.0)
        )
    report.add(CheckRow.compare("uniqueness.determinism", 0.0, determinism, 0.0))
    report.notes.update(
        deltas=list(deltas),
        theta=theta.tolist(),
        theta_final=float(theta[-1]),
        assert_until=float(limit),
    )
    return TwinResult(times, np.asarray(deltas, float), distances, theta, determinism, _log(report))


def transport_holder_norms(
    f_series: Sequence[ScalarField], r: float, g_series: Optional[Sequence[ScalarField]] = None
) -> Tuple[Array, Array]:
    """||f(t)||_r and ||g(t)||_r per snapshot (forcing zero without g)

    Raises:
        DomainError: r outside (-1, 1)
    """
    if not -1.0 < r < 1.0:
        raise DomainError(f"transport Hölder index r = {r} outside (-1, 1)")
    norms = np.array([holder_norm(f, r) for f in f_series])
    forcing = np.zeros_like(norms)
    if g_series is not None:
        forcing = np.array([holder_norm(g, r) for g in g_series])
    return norms, forcing


def transport_holder_report(
    times: Sequence[float],
    norms: Sequence[float],
    forcing: Sequence[float],
    v_accum: Sequence[float],
    r: float,
    C: float,
    rel_tol: float = 1e-6,
) -> CheckReport:
    """Rows of the transport bound from precomputed norm series"""
    times = np.asarray(times, dtype=np.float64)
    v_accum = np.asarray(v_accum, dtype=np.float64)
    norms = np.asarray(norms, dtype=np.float64)
    forcing = np.asarray(forcing, dtype=np.float64)
    report = CheckReport("transport_holder", constant=C, mode="assert")
    for k, t in enumerate(times):
        weights = forcing[: k + 1] * np.exp(C * (v_accum[k] - v_accum[: k + 1]))
        integral = float(trapezoid(weights, times[: k + 1])) if k else 0.0
        rhs = norms[0] * math.exp(C * v_accum[k]) + integral
        report.add(CheckRow.compare("transport_holder", t, norms[k], rhs, r, rel_tol * rhs))
    return _log(report)


def check_transport_holder(
    times: Sequence[float],
    f_series: Sequence[ScalarField],
    v_accum: Sequence[float],
    r: float,
    C: float,
    g_series: Optional[Sequence[ScalarField]] = None,
    rel_tol: float = 1e-6,
) -> CheckReport:
    """||f(t)||_r <= ||f(0)||_r e^{C V(t)} + int_0^t ||g||_r e^{C (V(t) - V(tau))} dtau

    The time integral uses the trapezoidal rule on the given snapshots.

    Raises:
        DomainError: r outside (-1, 1)
    """
    norms, forcing = transport_holder_norms(f_series, r, g_series)
    return transport_holder_report(times, norms, forcing, v_accum, r, C, rel_tol)


def gronwall_diagnostics(
    snapshots: Sequence[Tuple[float, ScalarField, Any, float]],
    eps: float = DEFAULT_EPS,
    C: float = 1.0,
) -> List[Dict[str, float]]:
    """Report-only Gamma(t) and Upsilon(t) along transported families

    Each snapshot is (t, omega, family, V(t)). With the family's regularity
    ||X||~_eps = ||X||_eps + ||div X||_{eps-1}:
        Gamma = (||d_X omega||_{eps-1} + ||X||~_eps) e^{-C V}
        Upsilon = ||omega||_inf ||X||~_eps + ||d_X omega||_{eps-1}
    """
    from .dyadic_analyzer import family_members

    rows = []
    for t, omega, family, v_accum in snapshots:
        members = family_members(family)
        regularity = max(
            vector_holder_norm(m, eps) + holder_norm(m.divergence(), eps - 1.0) for m in members
        )
        directional = max(holder_norm(directional_derivative(omega, m), eps - 1.0) for m in members)
        row = {
            "t": float(t),
            "gamma": (directional + regularity) * math.exp(-C * v_accum),
            "upsilon": omega.max_abs() * regularity + directional,
        }
        logger.diagnostic(
            "t={t:.4g} Gamma={gamma:.4e} Upsilon={upsilon:.4e}", **row
        )
        rows.append(row)
    return rows


def check_energy_bound(reports: Sequence[NormReport], rel_tol: float = 1e-8) -> CheckReport:
    """||v(t)||_2 <= ||v0||_2 + t ||rho0||_2"""
    first = reports[0]
    rhs = [first.v_l2 + r.t * first.rho_lp[2.0] for r in reports]
    report = check_inequality(
        "energy", [r.t for r in reports], [r.v_l2 for r in reports], rhs, rel_tol=rel_tol
    )
    report.mode = "assert"
    return _log(report)


def check_conservation(
    reports: Sequence[NormReport],
    areas: Optional[Sequence[float]] = None,
    drift_tol: float = 1e-6,
    overshoot_tol: float = 1e-2,
    area_tol: float = 1e-4,
) -> CheckReport:
    """Quadratic invariants and maximum principles of the discrete system

    ||rho||_2 drift always; ||omega||_2 drift and ||omega||_inf overshoot when
    the density gradient vanishes (Euler); contour area drift when given.
    """
    first = reports[0]
    report = CheckReport("conservation", mode="assert")
    rho0 = first.rho_lp[2.0]
    euler = first.grad_rho_lp[math.inf] == 0.0
    for r in reports:
        report.add(
            CheckRow.compare(
                "conservation.rho_l2", r.t, abs(r.rho_lp[2.0] - rho0), drift_tol * max(rho0, 1e-300)
            )
        )
        if euler:
            w0 = first.omega_lp[2.0]
            report.add(
                CheckRow.compare(
                    "conservation.omega_l2", r.t, abs(r.omega_lp[2.0] - w0), drift_tol * w0
                )
            )
            report.add(
                CheckRow.compare(
                    "conservation.omega_linf",
                    r.t,
                    r.omega_lp[math.inf],
                    (1.0 + overshoot_tol) * first.omega_lp[math.inf],
                )
            )
    if areas is not None and len(areas):
        a0 = areas[0]
        for t, area in zip((r.t for r in reports), areas):
            report.add(CheckRow.compare("conservation.area", t, abs(area - a0), area_tol * abs(a0)))
    return _log(report)


def minimal_constant(
    evaluate: Callable[[float], CheckReport], hi: float = 1.0, limit: float = 1e6
) -> float:
    """Smallest C (to 1e-6 relative) for which ``evaluate(C)`` passes

    ``evaluate`` must be monotone: passing at C implies passing at every
    larger constant.

    Raises:
        FitError: Still failing at ``limit``
    """
    logger.disable(__name__)
    try:
        if evaluate(0.0).passed:
            return 0.0
        while not evaluate(hi).passed:
            hi *= 2.0
            if hi > limit:
                raise FitError(f"no constant up to {limit:g} satisfies the bound")
        lo = 0.0
        for _ in range(64):
            if hi - lo <= 1e-6 * hi:
                break
            mid = 0.5 * (lo + hi)
            if evaluate(mid).passed:
                hi = mid
            else:
                lo = mid
        return hi
    finally:
        logger.enable(__name__)
