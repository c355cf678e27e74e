import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from lockey.geometry import angle_at, bearing, dist, wrap_angle

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_dist_basics():
    assert dist([0.0, 0.0], [3.0, 4.0]) == 5.0
    assert dist([1.0, 1.0], [1.0, 1.0]) == 0.0


def test_wrap_angle_interval_and_fixed_points():
    assert wrap_angle(np.pi) == np.pi
    assert wrap_angle(-np.pi) == np.pi
    assert abs(wrap_angle(3 * np.pi) - np.pi) < 1e-12
    x = np.linspace(-20, 20, 1001)
    w = wrap_angle(x)
    assert np.all(w > -np.pi) and np.all(w <= np.pi)
    # wrapping preserves the angle modulo a full turn
    assert np.allclose(np.cos(w), np.cos(x)) and np.allclose(np.sin(w), np.sin(x))


@given(finite, finite, finite, finite)
def test_bearing_antisymmetry(x1, y1, x2, y2):
    p, q = np.array([x1, y1]), np.array([x2, y2])
    if (p == q).all():
        assert bearing(p, q) == 0.0
    else:
        assert abs(wrap_angle(bearing(p, q) - bearing(q, p) - np.pi)) < 1e-9


def test_bearing_degenerate_is_zero():
    assert bearing([2.0, 2.0], [2.0, 2.0]) == 0.0


def test_angle_at_known_triangles():
    e, p, q = [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]
    assert abs(angle_at(e, p, q) - np.pi / 2) < 1e-12
    assert angle_at(e, e, q) == 0.0
    # collinear on the same side: zero vertex angle
    assert abs(angle_at(e, [1.0, 0.0], [2.0, 0.0])) < 1e-12
    # opposite sides: straight angle
    assert abs(angle_at(e, [1.0, 0.0], [-3.0, 0.0]) - np.pi) < 1e-12


@given(finite, finite, finite, finite, finite, finite)
def test_angle_at_range(ex, ey, px, py, qx, qy):
    a = angle_at([ex, ey], [px, py], [qx, qy])
    assert 0.0 <= a <= np.pi
