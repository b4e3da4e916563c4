"""
Tests for the executable estimates and the calibration protocol
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boussinesq_lab.boussinesq_solver import SolverConfig, State
from boussinesq_lab.constants import CALIBRATION_MARGIN, TWIN_THETA_TOLERANCE
from boussinesq_lab.dyadic_analyzer import NormReport, distance_to_points
from boussinesq_lab.estimates import (
    EstimateFit,
    assert_fit,
    balanced_gaussian_rings,
    balanced_ring_profile,
    calibrate,
    check_conservation,
    check_cz,
    check_energy_bound,
    check_inequality,
    check_lifespan,
    check_log_estimate,
    check_lp_bounds,
    check_plateau_density_bound,
    check_stationary_sigma,
    check_transport_holder,
    commutator_report,
    compact_mollify,
    cz_ratios,
    gronwall_diagnostics,
    lifespan_bound,
    lp_bound_ratios,
    minimal_constant,
    mollify_init,
    plateau_density_ratios,
    random_pairs,
    singular_lifespan_bound,
    smooth_lifespan_condition,
    stationary_sigma,
    transport_holder_norms,
    transport_holder_report,
    uniqueness_twin_experiment,
)
from boussinesq_lab.exceptions import DomainError, FitError
from boussinesq_lab.flow_transport import FrameFamily
from boussinesq_lab.profiles import bump
from boussinesq_lab.report import CheckReport, CheckRow
from boussinesq_lab.spectral_core import GridSpec, ScalarField, VelocityField

GRID = GridSpec(n=64, length=2.0 * math.pi)
INF = math.inf


def growing_reports():
    """t=0 and t=1 snapshots where grad rho grows by 20% over V(1) = 1"""
    return [
        NormReport(0.0, omega_lp={2.0: 1.0}, grad_rho_lp={2.0: 0.5}, v_accum=0.0),
        NormReport(1.0, omega_lp={2.0: 1.2}, grad_rho_lp={2.0: 0.6}, v_accum=1.0),
    ]


def euler_reports(omega_l2, omega_linf=1.0):
    return [
        NormReport(
            t,
            omega_lp={2.0: w, INF: m},
            grad_rho_lp={INF: 0.0},
            rho_lp={2.0: 0.0},
            v_accum=t,
        )
        for t, w, m in zip([0.0, 0.5], [1.0, omega_l2], [1.0, omega_linf])
    ]


class TestCheckReport:
    def test_row_slack_and_tolerance(self):
        row = CheckRow.compare("x", 0.0, 1.0, 0.9)
        assert row.slack == pytest.approx(-0.1) and not row.passed
        assert CheckRow.compare("x", 0.0, 1.0, 0.9, tolerance=0.2).passed

    def test_report_summary(self):
        report = CheckReport("x")
        assert report.passed and report.min_slack == INF
        report.add(CheckRow.compare("x", 0.0, 0.0, 1.0))
        report.add(CheckRow.compare("x", 0.5, 2.0, 1.0, p=2.0))
        assert not report.passed
        assert report.first_violation().t == 0.5
        restored = CheckReport.from_dict(report.to_dict())
        assert restored.rows[1].p == 2.0
        assert restored.to_dict()["first_violation"]["lhs"] == 2.0


class TestCalibration:
    def test_margin_over_finite_ratios(self):
        fit = calibrate("lp_bounds", [0.5, 2.0, math.inf, math.nan], seed=3, corpus="c")
        assert fit.constant == pytest.approx(CALIBRATION_MARGIN * 2.0)
        assert fit.samples == 2 and fit.seed == 3

    def test_no_finite_ratio(self):
        with pytest.raises(FitError):
            calibrate("cz", [math.inf])

    def test_held_out_violations_are_counted(self):
        fit = calibrate("cz", [1.0])
        report = assert_fit(fit, [1.0, 10.0], times=[0.0, 1.0])
        assert report.mode == "assert" and not report.passed
        assert fit.violations == 1
        assert fit.held_out_min_slack == pytest.approx(CALIBRATION_MARGIN - 10.0)

    def test_fit_dict_round_trip(self):
        fit = EstimateFit("energy", 1.25, constant0=0.5, corpus="sweep", samples=4)
        assert EstimateFit.from_dict(fit.to_dict()) == fit

    def test_minimal_constant(self):
        reports = growing_reports()
        c = minimal_constant(lambda C: check_lp_bounds(reports, [2.0], C))
        assert c == pytest.approx(math.log(1.2), rel=1e-4)

    def test_minimal_constant_gives_up(self):
        def never(C):
            report = CheckReport("x")
            report.add(CheckRow.compare("x", 0.0, 1.0, 0.0))
            return report

        with pytest.raises(FitError):
            minimal_constant(never, limit=100.0)


class TestLpAndCz:
    def test_lp_bounds(self):
        reports = growing_reports()
        assert not check_lp_bounds(reports, [2.0], 0.0).passed
        report = check_lp_bounds(reports, [2.0], 0.2)
        assert report.passed
        assert {row.check for row in report.rows} == {"lp_bounds.omega", "lp_bounds.rho"}

    def test_lp_ratios(self):
        ratios = lp_bound_ratios(growing_reports(), [2.0])
        assert max(ratios) == pytest.approx(math.log(1.2), rel=1e-4)
        assert min(ratios) == 0.0

    def test_unrecorded_index(self):
        with pytest.raises(DomainError):
            check_lp_bounds(growing_reports(), [4.0], 1.0)

    def test_cz(self):
        omega = ScalarField.from_function(GRID, lambda x1, x2: np.cos(x1) + 0.5 * np.sin(2 * x2))
        ratios = cz_ratios(omega, [2.0, 4.0])
        assert all(r > 0.0 for r in ratios)
        assert check_cz(omega, [2.0, 4.0], 1.01 * max(ratios)).passed
        with pytest.raises(DomainError):
            cz_ratios(omega, [1.0])


class TestLifespan:
    def test_explicit_bound(self):
        assert lifespan_bound(1.0, 1.0, 1.0, 1.0) == pytest.approx(math.log1p(0.5 * math.log(2)))
        assert lifespan_bound(1.0, 0.0, 1.0, 1.0) == INF

    def test_explicit_bound_domain(self):
        with pytest.raises(DomainError):
            lifespan_bound(1.0, 1.0, 0.0, 1.0)

    def test_singular_root(self):
        r, g, C, C0 = 0.3, 1.0, 1.0, 0.1
        T = singular_lifespan_bound(g, 1.0, 1.0, r, C, C0)
        lhs = math.log(T) + math.log(g) - (C0 + T) * math.exp(math.exp(C * T)) * math.log(r)
        assert lhs == pytest.approx(0.0, abs=1e-9)
        assert singular_lifespan_bound(0.0, 1.0, 1.0, r, C, C0) == INF

    def test_singular_radius_domain(self):
        with pytest.raises(DomainError):
            singular_lifespan_bound(1.0, 1.0, 1.0, 1.0, 1.0, 0.1)

    def test_smooth_condition(self):
        assert smooth_lifespan_condition(0.0, 1.0, 1.0, 1.0, 1.0, 1.0).passed
        assert not smooth_lifespan_condition(10.0, 1.0, 1.0, 1.0, 1.0, 1.0).passed

    def test_lifespan_check(self):
        reports = [
            NormReport(t, omega_lp={1.5: 1.0, INF: 1.0}, grad_rho_lp={INF: 1.0}, v_accum=t)
            for t in (0.0, 0.1, 0.2)
        ]
        report = check_lifespan(reports, 1.5, 1.0, 1.0, completed=True)
        assert report.passed and len(report.rows) == 3
        assert report.notes["T"] == pytest.approx(lifespan_bound(2.0, 1.0, 1.0, 1.0))
        assert not check_lifespan(reports, 1.5, 1.0, 1.0, completed=False).passed

    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(min_value=1e-3, max_value=1e3),
        st.floats(min_value=1.01, max_value=10.0),
    )
    def test_steeper_density_shortens_the_lifespan(self, g, factor):
        assert lifespan_bound(1.0, factor * g, 1.0, 1.0) <= lifespan_bound(1.0, g, 1.0, 1.0)
        assert singular_lifespan_bound(factor * g, 1.0, 1.0, 0.3, 1.0, 0.1) <= (
            singular_lifespan_bound(g, 1.0, 1.0, 0.3, 1.0, 0.1)
        )


class TestCheckInequality:
    def test_rows_and_tolerance(self):
        report = check_inequality("x", [0.0, 1.0], [1.0, 2.0], [1.0, 1.99], p=[2.0, 2.0])
        assert [row.passed for row in report.rows] == [True, False]
        assert report.rows[0].p == 2.0
        assert check_inequality("x", [1.0], [2.0], [1.99], rel_tol=1e-2).passed


class TestPlateauDensity:
    def reports(self):
        return [
            NormReport(0.0, omega_lp={2.0: 1.0}, grad_rho_lp={2.0: 1.0}, w_accum=0.0),
            NormReport(1.0, omega_lp={2.0: 2.0}, grad_rho_lp={2.0: 1.5}, w_accum=1.0),
        ]

    def test_bound(self):
        assert check_plateau_density_bound(self.reports(), 0.5, 1.0).passed
        assert not check_plateau_density_bound(self.reports(), 0.5, 0.1).passed

    def test_ratios(self):
        ratios = plateau_density_ratios(self.reports(), 0.5)
        assert max(ratios) == pytest.approx(math.log(1.5) / math.log(2.0))

    def test_unrecorded_index(self):
        with pytest.raises(DomainError):
            check_plateau_density_bound(self.reports(), 0.5, 1.0, p_list=[4.0])


class TestEnergyAndConservation:
    def test_energy(self):
        reports = [
            NormReport(0.0, v_l2=1.0, rho_lp={2.0: 0.1}),
            NormReport(1.0, v_l2=1.05, rho_lp={2.0: 0.1}),
        ]
        assert check_energy_bound(reports).passed
        reports[1] = NormReport(1.0, v_l2=1.2, rho_lp={2.0: 0.1})
        assert not check_energy_bound(reports).passed

    def test_euler_invariants(self):
        report = check_conservation(euler_reports(1.0 + 1e-7))
        assert report.passed
        assert "conservation.omega_linf" in {row.check for row in report.rows}
        assert not check_conservation(euler_reports(1.0 + 1e-5)).passed
        assert not check_conservation(euler_reports(1.0, omega_linf=1.1)).passed

    def test_area_drift(self):
        assert not check_conservation(euler_reports(1.0), areas=[1.0, 1.01]).passed


class TestTransportHolder:
    def test_growth_needs_the_constant(self):
        args = ([0.0, 1.0], [1.0, 2.0], [0.0, 0.0], [0.0, 1.0], 0.5)
        assert transport_holder_report(*args, C=1.0).passed
        assert not transport_holder_report(*args, C=0.5).passed
        c = minimal_constant(lambda C: transport_holder_report(*args, C=C))
        assert c == pytest.approx(math.log(2.0), rel=1e-5)

    def test_forcing_term(self):
        report = transport_holder_report([0.0, 1.0], [1.0, 1.9], [1.0, 1.0], [0.0, 0.0], 0.5, 0.0)
        assert report.passed
        assert report.rows[1].rhs == pytest.approx(2.0)

    def test_index_domain(self):
        with pytest.raises(DomainError):
            transport_holder_norms([ScalarField.zeros(GRID)], 1.0)

    def test_transported_field_keeps_its_norm(self):
        f = ScalarField.from_function(GRID, lambda x1, x2: np.sin(x1) * np.cos(x2))
        report = check_transport_holder([0.0, 0.5], [f, f], [0.0, 0.0], 0.5, 1.0)
        assert report.passed
        assert report.rows[1].slack == pytest.approx(0.0, abs=1e-12)


class TestGronwall:
    def test_gamma_decays_with_v(self):
        e1 = VelocityField(ScalarField.constant(GRID, 1.0), ScalarField.zeros(GRID))
        family = FrameFamily([e1])
        omega = ScalarField.zeros(GRID)
        rows = gronwall_diagnostics([(0.0, omega, family, 0.0), (1.0, omega, family, 1.0)])
        assert [row["t"] for row in rows] == [0.0, 1.0]
        assert rows[0]["gamma"] > 0.0
        assert rows[1]["gamma"] == pytest.approx(rows[0]["gamma"] * math.exp(-1.0))
        assert rows[0]["upsilon"] == 0.0


def shear_twin():
    """Steady shear v = (0, sin x1) at rest density, stepped to t = 0.06"""
    omega = ScalarField.from_function(GRID, lambda x1, x2: np.cos(x1))
    initial = State.initial(omega, ScalarField.zeros(GRID))
    return initial, SolverConfig(dt=0.02, t_end=0.06, diagnostics_every=1)


@pytest.fixture(scope="class")
def coupled_twin():
    initial, cfg = shear_twin()
    return uniqueness_twin_experiment(initial, cfg)


def rows_of(report, check):
    return [row for row in report.rows if row.check == check]


class TestUniquenessTwin:
    def test_perturbations_scale_linearly(self, coupled_twin):
        assert coupled_twin.determinism == 0.0
        assert coupled_twin.distances.shape == (3, 4)
        assert np.allclose(coupled_twin.theta, 1.0, atol=0.05)
        assert coupled_twin.report.passed

    def test_exponent_is_asserted_up_to_half_the_run(self, coupled_twin):
        asserted = rows_of(coupled_twin.report, "uniqueness")
        assert [row.t for row in asserted] == pytest.approx([0.0, 0.02])
        assert all(row.lhs == 0.5 for row in asserted)

    def test_exponent_does_not_grow(self, coupled_twin):
        assert np.all(np.diff(coupled_twin.theta) <= TWIN_THETA_TOLERANCE)
        assert np.all(coupled_twin.theta <= 1.0 + TWIN_THETA_TOLERANCE)
        monotone = rows_of(coupled_twin.report, "uniqueness.monotone")
        assert len(monotone) == 3 and all(row.passed for row in monotone)

    def test_distances_shrink_with_delta(self, coupled_twin):
        assert np.all(np.diff(coupled_twin.distances, axis=0) < 0.0)
        decay = rows_of(coupled_twin.report, "uniqueness.decay")
        assert len(decay) == 4
        assert all(row.lhs == pytest.approx(0.1, rel=0.05) and row.passed for row in decay)

    def test_delta_independent_perturbation_fails(self):
        initial, cfg = shear_twin()
        offset = ScalarField.from_function(GRID, lambda x1, x2: 0.1 * np.sin(x1))

        def shifted(state, delta):
            return State.initial(state.omega, state.rho + (offset if delta > 0.0 else 0.0))

        result = uniqueness_twin_experiment(initial, cfg, perturb=shifted)
        assert not result.report.passed
        assert np.allclose(result.theta, 0.0, atol=1e-8)
        assert not any(row.passed for row in rows_of(result.report, "uniqueness"))
        decay = rows_of(result.report, "uniqueness.decay")
        assert decay and not any(row.passed for row in decay)
        assert result.determinism == 0.0

    def test_transport_only_control(self, coupled_twin):
        initial, cfg = shear_twin()

        def vorticity_only(state, delta):
            return State.initial((1.0 + delta) * state.omega, state.rho)

        control = uniqueness_twin_experiment(initial, cfg, perturb=vorticity_only)
        assert control.report.passed
        assert np.allclose(control.theta, 1.0, atol=1e-6)
        assert np.max(np.abs(control.theta - coupled_twin.theta)) < 0.1

    @pytest.mark.parametrize("deltas", [(1e-2,), (1e-2, 1e-2), (1e-2, 0.0)])
    def test_needs_two_distinct_positive_deltas(self, deltas):
        initial, cfg = shear_twin()
        with pytest.raises(DomainError):
            uniqueness_twin_experiment(initial, cfg, deltas=deltas)


class TestLogEstimate:
    def test_zero_vorticity(self):
        e1 = VelocityField(ScalarField.constant(GRID, 1.0), ScalarField.zeros(GRID))
        family = FrameFamily([e1])
        report = check_log_estimate(ScalarField.zeros(GRID), family, None, 0.5, 1.5, 1.0)
        assert report.passed
        assert report.notes["ratio"] == 0.0


class TestMollifiers:
    def test_compact_mollifier_keeps_constants(self):
        f = ScalarField.constant(GRID, 0.3)
        assert np.all(compact_mollify(f, 4.0).values == 0.3)
        with pytest.raises(DomainError):
            compact_mollify(f, 100.0)

    def test_plateau_survives_mollification(self):
        centre = np.zeros((1, 2))
        dist = distance_to_points(GRID, centre)
        _, x2 = GRID.coordinates()
        rho0 = ScalarField(GRID, np.where(dist < 0.6, 0.5, x2))
        v0 = VelocityField(ScalarField.zeros(GRID), ScalarField.zeros(GRID))
        data = mollify_init(v0, rho0, 4.0, singular_set=centre, plateau_radius=0.6)
        assert data.report.passed
        assert data.report.rows[0].lhs == 0.0
        with pytest.raises(DomainError):
            mollify_init(v0, rho0, 2.0, singular_set=centre, plateau_radius=0.6)

    def test_commutator_fit(self):
        pairs = random_pairs(GRID, 2, seed=11)
        report = commutator_report(pairs, [4.0])
        assert report.mode == "fit" and report.passed
        assert report.constant == pytest.approx(CALIBRATION_MARGIN * report.notes["max_ratio"])


class TestStationarySigma:
    def test_balanced_ring_is_stationary(self):
        grid = GridSpec(n=256, length=8.0 * math.pi)
        result = stationary_sigma(balanced_ring_profile(), grid)
        assert result.relative_residual < 1e-2
        assert result.curl_error < 5e-2

    def test_gaussian_rings_recover_the_curl(self):
        grid = GridSpec(n=256, length=8.0 * math.pi)
        result = stationary_sigma(balanced_gaussian_rings((2.5, 0.5), (6.0, 0.5)), grid)
        assert result.curl_error <= 1e-6
        assert result.relative_residual <= 1e-6

    def test_residual_converges_under_refinement(self):
        profile = balanced_gaussian_rings((2.0, 0.2), (4.0, 0.2))
        coarse = stationary_sigma(profile, GridSpec(n=128, length=8.0 * math.pi))
        fine = stationary_sigma(profile, GridSpec(n=256, length=8.0 * math.pi))
        assert math.log2(coarse.relative_residual / fine.relative_residual) >= 2.0

    def test_box_profile_check(self):
        report = check_stationary_sigma(GridSpec(n=256, length=8.0 * math.pi))
        assert report.passed
        assert [row.check for row in report.rows] == [
            "stationary_sigma.residual",
            "stationary_sigma.curl",
        ]
        assert report.notes["curl_error"] <= 1e-6

    def test_unbalanced_profile(self):
        grid = GridSpec(n=64, length=8.0 * math.pi)
        with pytest.raises(DomainError):
            stationary_sigma(lambda r: bump(r, 1.0, 2.0), grid)
