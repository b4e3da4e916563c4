"""
Tests for the periodic grid, spectral operators and Biot-Savart
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boussinesq_lab.exceptions import ConfigurationError, DomainError
from boussinesq_lab.patch_lab import build_patch
from boussinesq_lab.spectral_core import (
    GridSpec,
    PeriodicInterpolator,
    ScalarField,
    VelocityField,
    biot_savart,
    dealias,
    gaussian_mollify,
    gradient,
    leray_project,
    spectral_derivative,
    spectral_tail_fraction,
)


class TestGridSpec:
    def test_default_grid(self):
        grid = GridSpec()
        assert grid.n == 256
        assert grid.length == pytest.approx(8.0 * math.pi)
        assert grid.axis[0] == pytest.approx(-4.0 * math.pi)

    def test_collects_every_violation(self):
        with pytest.raises(ConfigurationError) as info:
            GridSpec(n=100, length=-1.0)
        assert len(info.value.violations) == 2

    def test_below_minimum(self):
        with pytest.raises(ConfigurationError):
            GridSpec(n=8)

    def test_min_image(self, small_grid):
        d = np.array([0.5, 2.0 * math.pi - 0.5])
        assert np.allclose(small_grid.min_image(d), [0.5, -0.5])


class TestScalarField:
    def test_values_are_read_only(self, small_grid):
        f = ScalarField.zeros(small_grid)
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0

    def test_shape_mismatch(self, small_grid):
        with pytest.raises(ConfigurationError):
            ScalarField(small_grid, np.zeros((3, 3)))

    def test_lp_norms_of_constant(self, small_grid):
        f = ScalarField.constant(small_grid, 2.0)
        area = small_grid.length**2
        assert f.lp_norm(1.0) == pytest.approx(2.0 * area)
        assert f.lp_norm(2.0) == pytest.approx(2.0 * math.sqrt(area))
        assert f.lp_norm(math.inf) == 2.0

    def test_parseval(self, small_grid, rng):
        f = gaussian_mollify(ScalarField(small_grid, rng.standard_normal((64, 64))), 0.3)
        assert f.spectral_l2_norm() == pytest.approx(f.lp_norm(2.0), rel=1e-10)

    def test_arithmetic_on_different_grids(self, small_grid):
        other = GridSpec(n=32, length=small_grid.length)
        with pytest.raises(ConfigurationError):
            ScalarField.zeros(small_grid) + ScalarField.zeros(other)


class TestDerivatives:
    @given(st.integers(min_value=1, max_value=20))
    @settings(max_examples=10, deadline=None)
    def test_derivative_of_single_mode(self, k):
        grid = GridSpec(n=64, length=2.0 * math.pi)
        f = ScalarField.from_function(grid, lambda x1, x2: np.sin(k * x1) * np.cos(x2))
        d1, d2 = gradient(f)
        x1, x2 = grid.coordinates()
        assert np.allclose(d1.values, k * np.cos(k * x1) * np.cos(x2), atol=1e-9 * k)
        assert np.allclose(d2.values, -np.sin(k * x1) * np.sin(x2), atol=1e-9)

    @pytest.mark.parametrize("axis", [0, 3])
    def test_axis_must_be_one_or_two(self, small_grid, axis):
        with pytest.raises(DomainError):
            spectral_derivative(ScalarField.zeros(small_grid), axis)


class TestBiotSavart:
    def test_single_mode(self, small_grid):
        omega = ScalarField.from_function(small_grid, lambda x1, x2: np.cos(x1))
        v = biot_savart(omega)
        x1, _ = small_grid.coordinates()
        assert np.allclose(v.u1.values, 0.0, atol=1e-12)
        assert np.allclose(v.u2.values, np.sin(x1), atol=1e-12)
        assert v.provenance == "biot_savart"

    def test_divergence_free_with_curl_omega(self, small_grid, rng):
        raw = ScalarField(small_grid, rng.standard_normal((64, 64)))
        omega = dealias(gaussian_mollify(raw, 0.5))
        omega = omega - omega.mean()
        v = biot_savart(omega)
        assert v.divergence().max_abs() < 1e-10
        assert np.allclose(v.curl().values, omega.values, atol=1e-10)

    def test_mean_vorticity_is_projected_out(self, small_grid):
        v = biot_savart(ScalarField.constant(small_grid, 3.0))
        assert v.max_speed() == pytest.approx(0.0, abs=1e-12)

    def test_gradient_norm_matches_vorticity_norm(self, small_grid, rng):
        raw = ScalarField(small_grid, rng.standard_normal((64, 64)))
        omega = dealias(gaussian_mollify(raw, 0.3))
        omega = omega - omega.mean()
        grad = biot_savart(omega).gradient_norm()
        grad_l2 = math.sqrt(np.sum(grad**2) * small_grid.cell_area)
        assert grad_l2 == pytest.approx(omega.lp_norm(2.0), rel=1e-10)


def rankine_velocity(grid, radius=1.0):
    """Unit Rankine vortex on the torus: the free-space profile minus the
    rotation induced by the compensating mean vorticity -pi radius^2 / L^2"""
    x1, x2 = grid.coordinates()
    r2 = x1**2 + x2**2
    background = 0.5 * math.pi * radius**2 / grid.length**2
    factor = np.where(r2 <= radius**2, 0.5, 0.5 * radius**2 / np.maximum(r2, 1e-300))
    return -x2 * (factor - background), x1 * (factor - background), np.sqrt(r2)


@pytest.mark.parametrize("n", [256, pytest.param(512, marks=pytest.mark.slow)])
def test_rankine_patch_velocity(n):
    grid = GridSpec(n=n, length=8.0 * math.pi)
    spec, _ = build_patch("disc", {"radius": 1.0}, grid)
    v = biot_savart(spec.omega0)
    u1, u2, r = rankine_velocity(grid)
    away = (r <= 0.5) | ((r >= 1.5) & (r <= 3.0))
    error = np.hypot(v.u1.values - u1, v.u2.values - u2)[away]
    assert np.max(error) < 1e-2
    origin = int(np.argmin(np.abs(grid.axis)))
    for radius in (0.5, 2.0):
        index = int(np.argmin(np.abs(grid.axis - radius)))
        assert v.u2.values[index, origin] == pytest.approx(0.25, abs=1e-2)


class TestProjectionAndFilters:
    def test_dealias_cutoff(self, small_grid):
        low = ScalarField.from_function(small_grid, lambda x1, x2: np.cos(4 * x1))
        high = ScalarField.from_function(small_grid, lambda x1, x2: np.cos(30 * x1))
        assert np.allclose(dealias(low + high).values, low.values, atol=1e-12)

    def test_leray_removes_gradients(self, small_grid):
        phi = ScalarField.from_function(small_grid, lambda x1, x2: np.sin(x1) * np.sin(2 * x2))
        d1, d2 = gradient(phi)
        projected = leray_project(VelocityField(d1, d2))
        assert projected.max_speed() < 1e-12

    def test_leray_keeps_divergence_free_fields(self, small_grid):
        omega = ScalarField.from_function(small_grid, lambda x1, x2: np.sin(x1 + 2 * x2))
        v = biot_savart(omega)
        projected = leray_project(v)
        assert np.allclose(projected.u1.values, v.u1.values, atol=1e-12)
        assert np.allclose(projected.u2.values, v.u2.values, atol=1e-12)

    def test_tail_fraction(self, small_grid):
        smooth = ScalarField.from_function(small_grid, lambda x1, x2: np.cos(x1))
        rough = ScalarField.from_function(small_grid, lambda x1, x2: np.cos(20 * x1))
        assert spectral_tail_fraction(smooth) == 0.0
        assert spectral_tail_fraction(rough) == pytest.approx(1.0)
        assert spectral_tail_fraction(ScalarField.zeros(small_grid)) == 0.0


class TestPeriodicInterpolator:
    def test_smooth_function_and_wrap(self, small_grid):
        f = ScalarField.from_function(small_grid, lambda x1, x2: np.sin(x1) * np.cos(x2))
        interp = PeriodicInterpolator(f)
        points = np.array([[0.123, -0.456], [1.7, 2.9]])
        exact = np.sin(points[:, 0]) * np.cos(points[:, 1])
        assert np.allclose(interp(points), exact, atol=1e-5)
        shifted = points + small_grid.length * np.array([3.0, -2.0])
        assert np.allclose(interp(shifted), interp(points), atol=1e-10)

    def test_raw_array_needs_grid(self):
        with pytest.raises(ValueError):
            PeriodicInterpolator(np.zeros((16, 16)))
