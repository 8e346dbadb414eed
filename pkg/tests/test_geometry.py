import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pathlift.errors import ChartBoundsError, ExpressionError, SingularMatrixError, ValidationError
from pathlift.geometry import (
    Chart,
    FrameField,
    PathCurve,
    connection_coefficients,
    expression_connection,
    flat_connection,
    frame_change_matrix,
    make_path,
    sphere_chart,
    sphere_connection,
    sphere_rotation_angle,
)


def centered(fn, s, h=1e-6):
    return (fn(s + h) - fn(s - h)) / (2 * h)


# -- charts --------------------------------------------------------------------


def test_chart_rejects_bad_dimension_and_empty_box():
    with pytest.raises(ValidationError):
        Chart(0)
    with pytest.raises(ValidationError):
        Chart(1, bounds=((1.0, 1.0),))
    with pytest.raises(ValidationError):
        Chart(2, bounds=((0.0, 1.0),))


def test_chart_bounds_are_open():
    chart = Chart(1, bounds=((0.0, 1.0),))
    assert bool(chart.contains([0.5]))
    assert not bool(chart.contains([0.0]))
    with pytest.raises(ChartBoundsError):
        chart.require(np.array([[0.5], [1.0]]))


def test_periodic_displacement():
    chart = sphere_chart()
    d = chart.displacement([1.0, 0.0], [1.0, 2 * math.pi])
    np.testing.assert_allclose(d, [0.0, 0.0], atol=1e-15)


# -- paths ---------------------------------------------------------------------


def test_straight_segment():
    path = make_path((0, 1), ["s", "0"])
    for s in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(path.velocity(s), [1.0, 0.0], atol=1e-9)


def test_circle_velocity_against_centered_difference():
    path = make_path((0, 2 * math.pi), ["cos(s)", "sin(s)"], ["-sin(s)", "cos(s)"])
    expected = centered(path.position, math.pi / 2)
    np.testing.assert_allclose(path.velocity(math.pi / 2), [-1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(path.velocity(math.pi / 2), expected, atol=1e-9)


def test_sampled_square_velocity():
    grid = np.linspace(0, 1, 11)
    path = PathCurve.sampled((0, 1), np.column_stack([grid**2]))
    assert path.representation == "sampled"
    assert path.velocity(0.5)[0] == pytest.approx(1.0, abs=1e-4)
    # spline velocity agrees with differences of the spline itself
    assert path.velocity(0.5)[0] == pytest.approx(centered(path.position, 0.5)[0], abs=1e-6)


def test_finite_difference_velocity_when_no_derivative_given():
    path = make_path((0, 1), ["s^3", "exp(s)"])
    assert not path.analytic_velocity
    np.testing.assert_allclose(path.velocity(0.5), [0.75, math.exp(0.5)], atol=1e-6)
    # one-sided stencils at the ends stay inside the domain
    np.testing.assert_allclose(path.velocity(0.0), [0.0, 1.0], atol=1e-6)
    np.testing.assert_allclose(path.velocity(1.0), [3.0, math.e], atol=1e-5)


def test_analytic_velocity_matches_differences_at_random_parameters(rng):
    path = make_path((0, 3), ["sin(2*s) + s^2", "exp(-s)*cos(s)"],
                     ["2*cos(2*s) + 2*s", "-exp(-s)*cos(s) - exp(-s)*sin(s)"])
    for s in rng.uniform(1e-3, 3 - 1e-3, 100):
        assert np.max(np.abs(path.velocity(s) - centered(path.position, s))) <= 1e-4


def test_make_path_errors():
    with pytest.raises(ExpressionError):
        make_path((0, 1), ["s +", "0"])
    with pytest.raises(ExpressionError):
        make_path((0, 1), ["x1", "0"])
    with pytest.raises(ChartBoundsError):
        make_path((0, 1), ["s", "0"], chart=sphere_chart())
    with pytest.raises(ValidationError):
        make_path((1, 0), ["s"])
    with pytest.raises(ValidationError):
        make_path((0, 1), ["s"], chart=sphere_chart())


def test_path_rejects_parameters_outside_domain():
    path = make_path((0, 1), ["s", "0"])
    with pytest.raises(ValidationError):
        path.position(1.5)


def test_closed_loop_detection():
    loop = make_path((0, 2 * math.pi), ["pi/4", "s"], ["0", "1"], chart=sphere_chart())
    assert loop.is_closed()
    arc = make_path((0, math.pi), ["pi/4", "s"], chart=sphere_chart())
    assert not arc.is_closed()


# -- connections ----------------------------------------------------------------


def test_flat_connection_vanishes():
    assert not np.any(connection_coefficients(flat_connection(3), [0.1, -2.0, 5.0]))


def test_sphere_christoffel_symbols():
    g = connection_coefficients(sphere_connection(), [math.pi / 2, 0.0])
    assert g[0, 1, 1] == pytest.approx(0.0, abs=1e-16)
    g = connection_coefficients(sphere_connection(), [math.pi / 4, 0.0])
    assert g[1, 0, 1] == pytest.approx(1.0, abs=1e-15)
    assert g[0, 1, 1] == pytest.approx(-0.5, abs=1e-15)
    # only the three classical symbols are nonzero
    assert np.count_nonzero(np.abs(g) > 1e-15) == 3


@given(st.floats(min_value=0.01, max_value=math.pi - 0.01), st.floats(min_value=-10, max_value=10))
def test_sphere_connection_is_symmetric(theta, phi):
    g = connection_coefficients(sphere_connection(), [theta, phi])
    np.testing.assert_array_equal(g, np.swapaxes(g, 1, 2))


def test_sphere_connection_outside_chart():
    with pytest.raises(ChartBoundsError):
        connection_coefficients(sphere_connection(), [0.0, 1.0])


def test_expression_connection_matches_preset():
    chart = sphere_chart()
    conn = expression_connection(
        [[["0", "0"], ["0", "-sin(x1)*cos(x1)"]], [["0", "cot(x1)"], ["cot(x1)", "0"]]], chart)
    x = np.array([[0.3, 1.0], [2.0, -4.0]])
    np.testing.assert_allclose(conn(x), sphere_connection()(x), atol=1e-15)
    with pytest.raises(ValidationError):
        expression_connection([[["0"]]], chart)


# -- frames ---------------------------------------------------------------------


def test_frame_change_identity():
    frame = FrameField(lambda s: np.array([[1.0, s], [0.0, 2.0]]), 2)
    np.testing.assert_allclose(frame_change_matrix(frame, frame, 0.4), np.eye(2), atol=1e-12)


def test_frame_change_scaling():
    a = FrameField(lambda s: np.array([[1.0, s], [0.5, 2.0]]), 2)
    b = FrameField(lambda s: 2 * np.array([[1.0, s], [0.5, 2.0]]), 2)
    np.testing.assert_allclose(frame_change_matrix(a, b, 0.7), 2 * np.eye(2), atol=1e-12)


def test_frame_change_against_direct_solve(rng):
    ma = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    mb = rng.standard_normal((3, 3))
    a = FrameField(lambda s: ma, 3)
    b = FrameField(lambda s: mb, 3)
    A = frame_change_matrix(a, b, 0.0)
    np.testing.assert_allclose(A, np.linalg.solve(ma, mb), atol=1e-12)
    # e_i^b = A^j_i e_j^a
    np.testing.assert_allclose(ma @ A, mb, atol=1e-12)


def test_frame_condition_cap():
    frame = FrameField(lambda s: np.array([[1.0, 0.0], [0.0, 1e-9]]), 2)
    with pytest.raises(SingularMatrixError):
        frame(0.0)


def test_frames_over_different_paths_are_rejected():
    p1 = make_path((0, 1), ["s", "0"])
    p2 = make_path((0, 1), ["s", "1"])
    with pytest.raises(ValidationError):
        frame_change_matrix(FrameField.coordinate(2, p1), FrameField.coordinate(2, p2), 0.5)


def test_rotation_angle_in_orthonormal_frame():
    theta, angle = 0.6, 0.9
    rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    coord = np.diag([1.0, 1 / math.sin(theta)]) @ rot @ np.diag([1.0, math.sin(theta)])
    assert sphere_rotation_angle(coord, theta) == pytest.approx(angle, abs=1e-14)
