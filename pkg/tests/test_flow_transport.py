"""
Tests for flow maps, transported frames and the distance-set calculus
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boussinesq_lab.exceptions import DomainError
from boussinesq_lab.flow_transport import (
    AnalyticVelocity,
    FrameFamily,
    VelocityHistory,
    check_distance_set_inclusion,
    check_frame_lower_bound,
    compare_frames,
    delta_scale,
    integrate_flow,
    inverse_flow,
    inverse_delta_scale,
    pullback,
    round_trip_error,
    shoelace_area,
    transport_frame,
    two_time_delta_scale,
    wrap,
)
from boussinesq_lab.spectral_core import GridSpec, ScalarField, VelocityField

GRID = GridSpec(n=64, length=2.0 * math.pi)


def shear_history(t_end=1.0):
    """Steady shear v = (0, sin(x1)) recorded at both ends of [0, t_end]"""
    omega = ScalarField.from_function(GRID, lambda x1, x2: np.cos(x1))
    return VelocityHistory([0.0, t_end], [omega, omega])


def unit_frame():
    one, zero = ScalarField.constant(GRID, 1.0), ScalarField.zeros(GRID)
    return FrameFamily([VelocityField(one, zero)], ["e1"])


class TestIntegrateFlow:
    def test_zero_velocity(self):
        seeds = np.array([[0.1, 0.2], [-1.0, 3.0]])
        flow = integrate_flow(AnalyticVelocity.zero(), seeds, 1.0)
        assert np.array_equal(flow.final, seeds)

    def test_rigid_rotation_quarter_turn(self):
        flow = integrate_flow(
            AnalyticVelocity.rigid_rotation(1.0), [[1.0, 0.0]], math.pi / 2, dt=1e-3
        )
        assert np.allclose(flow.final, [[0.0, 1.0]], atol=1e-9)

    def test_backward_and_recording(self):
        rotation = AnalyticVelocity.rigid_rotation(1.0)
        flow = integrate_flow(rotation, [[0.0, 1.0]], 0.0, dt=0.01, t0=1.0, record_every=25)
        assert flow.times[0] == 1.0 and flow.times[-1] == 0.0
        assert len(flow.times) == 5
        assert np.allclose(flow.final, [[math.sin(1.0), math.cos(1.0)]], atol=1e-9)

    def test_inverse_of_a_quarter_turn(self):
        pre = inverse_flow(AnalyticVelocity.rigid_rotation(1.0), [[0.0, 1.0]], math.pi / 2, 1e-3)
        assert np.allclose(pre, [[1.0, 0.0]], atol=1e-9)

    def test_round_trip(self):
        error = round_trip_error(shear_history(), GRID.points()[::37], 1.0, dt=0.01)
        assert error <= 1e-4 * GRID.length

    def test_history_must_cover_the_interval(self):
        with pytest.raises(DomainError):
            integrate_flow(shear_history(1.0), [[0.0, 0.0]], 2.0)

    def test_shear_trajectory(self):
        flow = integrate_flow(shear_history(), [[0.5, 0.0]], 1.0, dt=0.01)
        assert np.allclose(flow.final, [[0.5, math.sin(0.5)]], atol=1e-5)


class TestVelocityHistory:
    def test_validation(self):
        omega = ScalarField.zeros(GRID)
        with pytest.raises(DomainError):
            VelocityHistory([0.0, 0.0], [omega, omega])
        with pytest.raises(DomainError):
            VelocityHistory([0.0], [omega, omega])

    def test_linear_in_time(self):
        omega = ScalarField.from_function(GRID, lambda x1, x2: np.cos(x1))
        history = VelocityHistory([0.0, 1.0], [omega, 3.0 * omega])
        v = history.velocity(0.5, np.array([[0.5, 0.0]]))
        assert np.allclose(v, [[0.0, 2.0 * math.sin(0.5)]], atol=1e-6)
        assert history.field(0.5).u2.max_abs() == pytest.approx(2.0, rel=1e-6)
        assert history.default_dt() == 1.0


class TestGeometry:
    def test_wrap(self):
        wrapped = wrap(np.array([[math.pi, -3.0 * math.pi + 0.5]]), GRID)
        assert np.allclose(wrapped, [[-math.pi, -math.pi + 0.5]])

    def test_shoelace(self):
        square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        assert shoelace_area(square) == pytest.approx(1.0)
        angle = np.linspace(0.0, 2.0 * np.pi, 2000, endpoint=False)
        circle = np.column_stack([np.cos(angle), np.sin(angle)])
        assert shoelace_area(circle[::-1]) == pytest.approx(math.pi, rel=1e-5)

    def test_pullback_by_zero_flow(self):
        f0 = ScalarField.from_function(GRID, lambda x1, x2: np.sin(x1) * np.cos(2 * x2))
        f = pullback(f0, AnalyticVelocity.zero(), 0.5, dt=0.1)
        assert np.allclose(f.values, f0.values, atol=1e-10)


class TestFrames:
    def test_empty_family(self):
        with pytest.raises(DomainError):
            FrameFamily([])

    def test_rotation_turns_the_frame(self):
        rotation = AnalyticVelocity.rigid_rotation(1.0, GRID)
        family = transport_frame(unit_frame(), rotation, 0.5, dt=0.01)
        member = family.members[0]
        assert np.allclose(member.u1.values, math.cos(0.5), atol=1e-8)
        assert np.allclose(member.u2.values, math.sin(0.5), atol=1e-8)
        assert family.t == 0.5 and family.labels == ["e1"]

    def test_methods_agree_on_shear(self):
        history = shear_history()
        by_characteristics = transport_frame(unit_frame(), history, 0.5, dt=0.01)
        by_grid = transport_frame(unit_frame(), history, 0.5, method="eulerian", dt=0.01)
        x1, _ = GRID.coordinates()
        member = by_characteristics.members[0]
        assert np.allclose(member.u1.values, 1.0, atol=1e-5)
        assert np.allclose(member.u2.values, 0.5 * np.cos(x1), atol=1e-5)
        assert compare_frames(by_characteristics, by_grid) < 1e-5

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            transport_frame(unit_frame(), shear_history(), 0.5, method="lagrange")

    def test_lower_bound(self):
        history = shear_history()
        family = transport_frame(unit_frame(), history, 0.5, dt=0.01)
        report = check_frame_lower_bound(unit_frame(), [(family, 0.5)])
        assert report.passed
        assert report.notes["i0"] == pytest.approx(1.0)
        assert report.rows[0].rhs == pytest.approx(1.0, abs=1e-5)


class TestDeltaScale:
    def test_example(self):
        assert delta_scale(0.25, math.log(2.0)) == pytest.approx(0.0625)

    @pytest.mark.parametrize("h, ll", [(0.5, 0.0), (0.0, 0.0), (0.1, -1.0)])
    def test_domain(self, h, ll):
        with pytest.raises(DomainError):
            delta_scale(h, ll)

    @given(
        st.floats(min_value=1e-3, max_value=math.exp(-1.0)),
        st.floats(min_value=0.0, max_value=1.5),
        st.floats(min_value=0.0, max_value=1.5),
    )
    @settings(max_examples=50)
    def test_composition_and_inverse(self, h, a, b):
        assert delta_scale(delta_scale(h, a), b) == pytest.approx(delta_scale(h, a + b), rel=1e-9)
        assert inverse_delta_scale(delta_scale(h, a), a) == pytest.approx(h, rel=1e-9)
        assert two_time_delta_scale(h, a + b, a) == pytest.approx(delta_scale(h, b), rel=1e-9)
        assert delta_scale(h, a) <= h


class TestDistanceInclusion:
    def test_rotation_keeps_distances(self):
        rotation = AnalyticVelocity.rigid_rotation(1.0, GRID)
        a0 = np.array([[0.5, 0.0], [-0.5, 0.5]])
        report = check_distance_set_inclusion(a0, rotation, 0.3, 1.0, 0.5, GRID, dt=0.01)
        assert report.passed
        assert report.notes["samples"] > 0
        assert report.notes["delta"] == pytest.approx(0.3 ** math.exp(0.5))
