"""
Tests for patch construction, frame families and boundary diagnostics
"""

import math
from types import SimpleNamespace

import numpy as np
import pytest

from boussinesq_lab.dyadic_analyzer import distance_to_points, dyadic_scales
from boussinesq_lab.exceptions import ConfigurationError, ConstructionError
from boussinesq_lab.patch_lab import (
    Ellipse,
    boundary_holder_estimate,
    build_admissible_family,
    build_patch,
    build_singular_family,
    check_hypothesis_h,
    ellipse_orientation,
    extract_contour,
    kirchhoff_rate,
    make_shape,
    plateau_persistence,
    singular_blowup_profile,
    theta_norm_scaling,
)
from boussinesq_lab.spectral_core import GridSpec, biot_savart

GRID = GridSpec(n=128, length=2.0 * math.pi)
FINE = GridSpec(n=256, length=2.0 * math.pi)


@pytest.fixture(scope="module")
def square():
    return build_patch(
        "square", {"half_side": 1.0}, FINE, profile="tapered", amplitude=0.1, plateau_radius=0.3
    )


class TestShapes:
    @pytest.mark.parametrize(
        "kind, params, area",
        [
            ("disc", {"radius": 1.0}, math.pi),
            ("disc", {"radius": 0.8, "center": (0.2, -0.1)}, math.pi * 0.64),
            ("ellipse", {"a": 1.0, "b": 0.5, "angle": 0.4}, math.pi * 0.5),
            ("square", {"half_side": 1.0}, 4.0),
        ],
    )
    def test_vorticity_mass_is_the_area(self, kind, params, area):
        spec, state = build_patch(kind, params, GRID)
        assert spec.shape.area() == pytest.approx(area)
        assert spec.omega0.integral() == pytest.approx(area, rel=1e-10)
        assert state.omega.integral() == pytest.approx(area, rel=1e-10)

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            make_shape("triangle", {})

    def test_invalid_parameters(self):
        with pytest.raises(ConfigurationError):
            make_shape("ellipse", {"a": -1.0, "b": 0.0})

    def test_patch_must_stay_in_the_central_quarter(self):
        with pytest.raises(ConfigurationError):
            build_patch("disc", {"radius": 2.0}, GRID)

    def test_custom_level_set(self):
        spec, _ = build_patch(
            "custom_levelset", {"level": lambda x1, x2: 1.0 - x1**2 - x2**2}, GRID
        )
        assert spec.shape.area() == pytest.approx(math.pi, rel=5e-3)
        assert spec.omega0.integral() == pytest.approx(math.pi, rel=5e-3)
        assert np.allclose(np.hypot(*spec.contour.T), 1.0, atol=GRID.dx)


class TestDensity:
    def test_tapered_density_is_flat_on_the_plateau(self, square):
        spec, _ = square
        for corner in spec.singular_set:
            inside = distance_to_points(FINE, corner[None, :]) < spec.plateau_radius
            values = spec.rho0.values[inside]
            assert values.size > 0
            assert np.ptp(values) == 0.0

    def test_banded_density_saturates(self):
        spec, _ = build_patch("square", {"half_side": 1.0}, FINE, profile="banded", amplitude=0.2)
        for corner in spec.singular_set:
            inside = distance_to_points(FINE, corner[None, :]) < spec.plateau_radius
            assert np.all(spec.rho0.values[inside] == 0.2 * np.sign(corner[1]))

    def test_banded_needs_points_off_the_centre_line(self):
        with pytest.raises(ConfigurationError):
            build_patch(
                "disc",
                {"radius": 1.0},
                GRID,
                profile="banded",
                amplitude=0.1,
                singular_set=[[1.0, 0.0]],
            )

    def test_unknown_profile(self):
        with pytest.raises(ConfigurationError):
            build_patch("disc", {"radius": 1.0}, GRID, profile="wavy")

    def test_zero_and_linear(self):
        spec, _ = build_patch("disc", {"radius": 1.0}, GRID, profile="zero", amplitude=3.0)
        assert spec.rho0.max_abs() == 0.0
        spec, _ = build_patch("disc", {"radius": 1.0}, GRID, profile="linear", amplitude=0.1)
        x1, x2 = GRID.coordinates()
        near = np.hypot(x1, x2) < 1.0
        assert np.allclose(spec.rho0.values[near], 0.1 * x2[near])


class TestTracersAndHypothesis:
    def test_tracer_layout(self, square):
        spec, state = square
        assert spec.is_singular
        assert spec.singular_set.shape == (4, 2)
        assert state.tracers.shape[0] == 4 + spec.contour.shape[0] + spec.plateau_seeds.shape[0]
        assert np.array_equal(state.tracers[spec.singular_slice], spec.singular_set)

    def test_hypothesis_holds(self, square):
        disc, _ = build_patch("disc", {"radius": 1.0}, GRID)
        assert check_hypothesis_h(disc) > 0.0
        assert check_hypothesis_h(square[0]) > 0.0


class TestFamilies:
    def test_admissible_family_on_a_disc(self):
        spec, _ = build_patch("disc", {"radius": 1.0}, GRID)
        family = build_admissible_family(spec)
        value, _ = family.nondegeneracy()
        assert value > 0.0
        assert family.labels == ["tangent", "far"]

    def test_admissible_family_rejects_singular_patches(self, square):
        with pytest.raises(ConstructionError):
            build_admissible_family(square[0])

    def test_singular_family_order(self, square):
        spec, _ = square
        scales = dyadic_scales(FINE)
        assert len(scales) >= 3
        result = build_singular_family(spec, scales)
        alpha0, beta0, gamma0 = result.order
        assert alpha0 >= 1.0
        assert gamma0 < 0.0
        for h, distance in result.support_distance.items():
            assert distance >= 0.5 * h - FINE.dx

    def test_singular_family_needs_a_singular_set(self):
        spec, _ = build_patch("disc", {"radius": 1.0}, GRID)
        with pytest.raises(ConstructionError):
            build_singular_family(spec, dyadic_scales(GRID))

    def test_theta_scaling(self, square):
        scaling = theta_norm_scaling(square[0], dyadic_scales(FINE), r_list=(1.0,))
        assert scaling[1.0]["slope"] < 0.0
        assert math.isfinite(scaling[1.0]["constant"])


class TestBoundary:
    def test_extract_contour_of_a_disc(self):
        spec, _ = build_patch("disc", {"radius": 1.0}, GRID)
        contour = extract_contour(spec.level_fn, 0.0)
        assert np.allclose(np.hypot(*contour.T), 1.0, atol=0.5 * GRID.dx)

    def test_smooth_boundary_has_exponent_one(self):
        spec, _ = build_patch("disc", {"radius": 1.0}, GRID)
        assert boundary_holder_estimate(spec.contour).exponent == pytest.approx(1.0)

    def test_corners_lower_the_exponent_until_masked(self, square):
        spec, _ = square
        assert boundary_holder_estimate(spec.contour).exponent < 0.2
        masked = boundary_holder_estimate(spec.contour, spec.singular_set, 0.2, FINE)
        assert masked.exponent == 1.0
        assert masked.unmasked < spec.contour.shape[0]

    def test_blowup_profile_rows(self, square):
        spec, state = square
        scales = dyadic_scales(FINE)
        profile = singular_blowup_profile(biot_savart(state.omega), spec.singular_set, scales)
        assert len(profile.rows()) == len(scales)
        assert np.all(np.diff(profile.masked_sup) >= 0.0)

    def test_plateau_persistence_at_start(self, square):
        spec, state = square
        report = plateau_persistence(SimpleNamespace(snapshots=[state]), spec)
        assert report.passed and len(report.rows) == 1

    def test_plateau_persistence_without_plateau(self):
        spec, state = build_patch("disc", {"radius": 1.0}, GRID)
        report = plateau_persistence(SimpleNamespace(snapshots=[state]), spec)
        assert report.notes["skipped"] == "no plateau"


class TestKirchhoff:
    def test_rate(self):
        assert kirchhoff_rate(1.0, 0.5) == pytest.approx(2.0 / 9.0)
        assert kirchhoff_rate(1.0, 1.0, vorticity=2.0) == pytest.approx(0.5)

    @pytest.mark.parametrize("angle", [0.0, 0.3, -1.2])
    def test_orientation(self, angle):
        contour = Ellipse(1.0, 0.5, angle).contour(512)
        assert ellipse_orientation(contour) == pytest.approx(angle, abs=1e-9)
