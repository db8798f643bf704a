import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripose.lines import line_from_endpoints

TWO_PI = 2 * np.pi


class TestLineFromEndpoints:
    def test_horizontal_segment(self):
        # Line y = 5: with l = (sin t, -cos t, rho) and rho >= 0 the
        # canonical angle is 0 (t = pi would encode y = -5).
        obs = line_from_endpoints([0.0, 5.0], [10.0, 5.0])
        assert obs.rho == pytest.approx(5.0)
        assert obs.theta == pytest.approx(0.0, abs=1e-12)
        assert obs.c == pytest.approx(10.0)
        assert abs(obs.d) == pytest.approx(5.0)  # foot (0,5) to midpoint (5,5)
        np.testing.assert_allclose(obs.vec @ [0.0, 5.0, 1.0], 0.0, atol=1e-9)

    def test_vertical_segment(self):
        obs = line_from_endpoints([3.0, 0.0], [3.0, 7.0])
        assert obs.rho == pytest.approx(3.0)
        assert obs.theta == pytest.approx(3 * np.pi / 2)
        assert obs.c == pytest.approx(7.0)
        assert abs(obs.d) == pytest.approx(3.5)
        np.testing.assert_allclose(obs.vec @ [3.0, 7.0, 1.0], 0.0, atol=1e-9)

    def test_diagonal_through_origin(self):
        obs = line_from_endpoints([1.0, 1.0], [2.0, 2.0])
        assert obs.rho == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_segment_rejected(self):
        with pytest.raises(ValueError):
            line_from_endpoints([1.0, 2.0], [1.0, 2.0 + 1e-10])

    @given(
        x1=st.floats(-500, 500),
        y1=st.floats(-500, 500),
        dx=st.floats(-400, 400),
        dy=st.floats(-400, 400),
    )
    @settings(max_examples=150, deadline=None)
    def test_endpoints_on_line_and_canonical(self, x1, y1, dx, dy):
        if dx * dx + dy * dy < 1.0:
            return
        p1 = np.array([x1, y1])
        p2 = p1 + [dx, dy]
        obs = line_from_endpoints(p1, p2)
        assert obs.rho >= 0.0
        assert 0.0 <= obs.theta < TWO_PI
        for p in (p1, p2):
            assert abs(obs.vec @ [p[0], p[1], 1.0]) < 1e-9 * max(1.0, np.abs(p).max())

    def test_d_is_signed_offset_along_direction(self):
        obs = line_from_endpoints([0.0, 5.0], [10.0, 5.0])
        direction = np.array([np.cos(obs.theta), np.sin(obs.theta)])
        foot = -obs.rho * np.array([np.sin(obs.theta), -np.cos(obs.theta)])
        mid = np.array([5.0, 5.0])
        assert obs.d == pytest.approx(float((mid - foot) @ direction))
