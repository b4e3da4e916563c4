"""
Tests for the pseudo-spectral solver and its diagnostics
"""

import math

import numpy as np
import pytest

from boussinesq_lab.boussinesq_solver import (
    Diagnostics,
    SolverConfig,
    State,
    rhs,
    run,
    step,
    time_reversed,
)
from boussinesq_lab.exceptions import CFLViolationError, ConfigurationError, DivergenceError
from boussinesq_lab.spectral_core import GridSpec, ScalarField, gaussian_mollify

GRID = GridSpec(n=64, length=2.0 * math.pi)


def shear_state(amplitude=1.0, rho=None, tracers=None):
    """omega = A cos(x1) is a steady shear flow v = (0, A sin(x1))"""
    omega = ScalarField.from_function(GRID, lambda x1, x2: amplitude * np.cos(x1))
    rho = rho if rho is not None else ScalarField.zeros(GRID)
    return State(0.0, omega, rho, tracers)


class TestSolverConfig:
    def test_collects_violations(self):
        with pytest.raises(ConfigurationError) as info:
            SolverConfig(dt=0.0, t_end=-1.0, diagnostics_every=0)
        assert len(info.value.violations) == 3

    def test_n_steps_rounds(self):
        assert SolverConfig(dt=0.1, t_end=0.3).n_steps == 3

    def test_t_end_must_be_a_whole_number_of_steps(self):
        with pytest.raises(ConfigurationError) as info:
            SolverConfig(dt=0.3, t_end=1.0)
        assert "whole number of steps" in info.value.violations[0]
        assert SolverConfig(dt=0.25, t_end=1.0).n_steps == 4


class TestRhs:
    def test_density_forcing(self):
        rho = ScalarField.from_function(GRID, lambda x1, x2: np.sin(x1))
        domega, drho = rhs(State(0.0, ScalarField.zeros(GRID), rho))
        x1, _ = GRID.coordinates()
        assert np.allclose(domega.values, np.cos(x1), atol=1e-12)
        assert drho.max_abs() < 1e-12

    def test_non_finite_state(self):
        bad = ScalarField(GRID, np.full((64, 64), np.nan))
        with pytest.raises(DivergenceError):
            rhs(State(0.0, bad, ScalarField.zeros(GRID)))

    def test_mismatched_grids(self):
        other = GridSpec(n=32, length=GRID.length)
        with pytest.raises(ConfigurationError):
            State(0.0, ScalarField.zeros(GRID), ScalarField.zeros(other))


class TestStep:
    def test_steady_shear_is_preserved(self):
        state = shear_state()
        new = step(state, SolverConfig(dt=0.05, t_end=1.0))
        assert new.t == pytest.approx(0.05)
        assert new.step == 1
        assert np.allclose(new.omega.values, state.omega.values, atol=1e-12)

    def test_linear_growth_under_density_forcing(self):
        # rho = sin(x1) stays put and omega = t cos(x1) exactly
        rho = ScalarField.from_function(GRID, lambda x1, x2: np.sin(x1))
        state = State(0.0, ScalarField.zeros(GRID), rho)
        series = run(state, SolverConfig(dt=0.05, t_end=0.5, diagnostics_every=5))
        x1, _ = GRID.coordinates()
        assert np.allclose(series.final.omega.values, 0.5 * np.cos(x1), atol=1e-10)
        assert np.allclose(series.final.rho.values, rho.values, atol=1e-10)

    def test_cfl_halving(self, records):
        state = shear_state(amplitude=2.0)
        cfg = SolverConfig(dt=0.05, t_end=1.0, cfl_max=0.5)
        assert state.cfl(cfg.dt) > cfg.cfl_max
        new = step(state, cfg)
        assert new.t == pytest.approx(0.05)
        assert new.step == 1
        assert any("halving dt" in r["message"] for r in records if r["level"]["name"] == "WARNING")

    def test_cfl_violation(self):
        with pytest.raises(CFLViolationError):
            step(shear_state(amplitude=1e4), SolverConfig(dt=0.1, t_end=1.0))

    def test_tracers_follow_the_shear(self):
        state = shear_state(tracers=np.array([[0.5, 0.0], [-1.0, 1.0]]))
        series = run(state, SolverConfig(dt=0.02, t_end=0.5, diagnostics_every=25))
        expected = np.array([[0.5, 0.5 * math.sin(0.5)], [-1.0, 1.0 + 0.5 * math.sin(-1.0)]])
        assert np.allclose(series.final.tracers, expected, atol=1e-5)


class TestTimeReversal:
    def test_forward_reverse_forward_returns(self, rng):
        raw = ScalarField(GRID, rng.standard_normal((64, 64)))
        omega = gaussian_mollify(raw, 0.8) * 0.5
        rho = gaussian_mollify(ScalarField(GRID, rng.standard_normal((64, 64))), 0.8) * 0.1
        start = State.initial(omega, rho)
        cfg = SolverConfig(dt=0.01, t_end=0.1)
        state = start
        for _ in range(10):
            state = step(state, cfg)
        state = time_reversed(state)
        for _ in range(10):
            state = step(state, cfg)
        back = time_reversed(state)
        scale = start.omega.max_abs()
        assert np.max(np.abs(back.omega.values - start.omega.values)) < 1e-6 * scale
        assert np.max(np.abs(back.rho.values - start.rho.values)) < 1e-6 * scale


class TestDiagnostics:
    def test_accumulators_of_steady_shear(self):
        diagnostics = Diagnostics(GRID, sample_pairs=1000)
        cfg = SolverConfig(dt=0.05, t_end=0.5, diagnostics_every=2)
        series = run(shear_state(), cfg, diagnostics)
        times = series.times
        assert times[0] == 0.0 and times[-1] == pytest.approx(0.5)
        v_accum = np.array([r.v_accum for r in series.reports])
        assert np.allclose(v_accum, times, rtol=1e-6)
        w_accum = np.array([r.w_accum for r in series.reports])
        assert np.all(np.diff(w_accum) > 0.0)
        report = series.reports[-1]
        assert report.omega_lp[math.inf] == pytest.approx(1.0)
        assert report.holder[0.5] > 0.0 and report.holder[-0.5] > 0.0
        assert not report.under_resolved

    def test_hooks_see_every_snapshot(self):
        seen = []
        diagnostics = Diagnostics(GRID, compute_ll=False, hooks=[lambda s, r: seen.append(r.t)])
        run(shear_state(), SolverConfig(dt=0.1, t_end=0.4, diagnostics_every=2), diagnostics)
        assert seen == pytest.approx([0.0, 0.2, 0.4])

    def test_under_resolution_warns_once(self, records):
        omega = ScalarField.from_function(GRID, lambda x1, x2: np.cos(20.0 * x1))
        diagnostics = Diagnostics(GRID, compute_ll=False)
        diagnostics.snapshot(State(0.0, omega, ScalarField.zeros(GRID)))
        report = diagnostics.snapshot(State(0.1, omega, ScalarField.zeros(GRID)))
        assert report.under_resolved
        warnings = [r for r in records if "under-resolved" in r["message"]]
        assert len(warnings) == 1


class TestRun:
    def test_abort_keeps_partial_series(self):
        state = shear_state(amplitude=1e4)
        cfg = SolverConfig(dt=0.1, t_end=1.0)
        with pytest.raises(CFLViolationError) as info:
            run(state, cfg, Diagnostics(GRID, compute_ll=False), scenario="blowup")
        partial = info.value.partial
        assert not partial.completed
        assert len(partial.reports) == 1
        assert partial.to_dict()["completed"] is False

    def test_energy_bound_and_overshoot(self):
        rho = ScalarField.from_function(GRID, lambda x1, x2: 0.1 * np.sin(x1 + x2))
        state = State.initial(shear_state().omega, rho)
        cfg = SolverConfig(dt=0.05, t_end=0.5, diagnostics_every=5)
        series = run(state, cfg, Diagnostics(GRID, compute_ll=False))
        assert series.energy_bound_slack() >= -1e-10
        assert series.rho_overshoot() < 1e-2
        assert series.completed
