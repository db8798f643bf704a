import numpy as np
import pytest
from scipy.spatial.transform import Rotation as ScipyRotation

from tripose.rotations import (
    cayley_jacobian,
    cayley_to_rotation,
    quaternion_from_rotation,
    random_rotation_about_random_axis,
    rotation_angle_deg,
    rotation_error,
    rotation_from_euler_xyz,
    rotation_to_cayley,
    skew,
    translation_direction_error,
)


class TestCayley:
    def test_round_trip_random_rotations(self):
        rng = np.random.default_rng(0)
        R = ScipyRotation.random(500, random_state=rng).as_matrix()
        back = cayley_to_rotation(rotation_to_cayley(R))
        np.testing.assert_allclose(back, R, atol=1e-10)

    def test_round_trip_up_to_170_degrees(self):
        rng = np.random.default_rng(1)
        for ang in np.linspace(0.01, np.radians(170), 40):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            R = ScipyRotation.from_rotvec(ang * axis).as_matrix()
            np.testing.assert_allclose(
                cayley_to_rotation(rotation_to_cayley(R)), R, atol=1e-10
            )

    def test_produces_valid_rotations(self):
        rng = np.random.default_rng(2)
        c = rng.normal(size=(100, 3))
        R = cayley_to_rotation(c)
        np.testing.assert_allclose(
            np.einsum("nij,nik->njk", R, R), np.broadcast_to(np.eye(3), (100, 3, 3)), atol=1e-10
        )
        np.testing.assert_allclose(np.linalg.det(R), 1.0, atol=1e-10)

    def test_matches_scipy_convention(self):
        # Cayley vector = rotation axis scaled by tan(angle / 2).
        axis = np.array([0.0, 0.0, 1.0])
        ang = 0.8
        R = cayley_to_rotation(np.tan(ang / 2) * axis)
        expected = ScipyRotation.from_rotvec(ang * axis).as_matrix()
        np.testing.assert_allclose(R, expected, atol=1e-12)

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        c = rng.normal(size=(20, 3)) * 0.5
        J = cayley_jacobian(c)
        eps = 1e-7
        for k in range(3):
            d = np.zeros(3)
            d[k] = eps
            fd = (cayley_to_rotation(c + d) - cayley_to_rotation(c - d)) / (2 * eps)
            np.testing.assert_allclose(J[:, k], fd, atol=1e-8)

    def test_singular_at_180_degrees(self):
        R = ScipyRotation.from_rotvec([np.pi, 0, 0]).as_matrix()
        with pytest.raises(ValueError):
            rotation_to_cayley(R)


class TestAngles:
    def test_quaternion_matches_scipy(self):
        rng = np.random.default_rng(4)
        R = ScipyRotation.random(300, random_state=rng).as_matrix()
        q = quaternion_from_rotation(R)
        qs = ScipyRotation.from_matrix(R).as_quat()  # (x, y, z, w)
        expected = np.concatenate([qs[:, 3:], qs[:, :3]], axis=1)
        sign = np.sign(np.einsum("ni,ni->n", q, expected))
        np.testing.assert_allclose(q * sign[:, None], expected, atol=1e-12)

    def test_angle_matches_scipy(self):
        rng = np.random.default_rng(5)
        R = ScipyRotation.random(300, random_state=rng).as_matrix()
        np.testing.assert_allclose(
            rotation_angle_deg(R),
            np.degrees(ScipyRotation.from_matrix(R).magnitude()),
            atol=1e-10,
        )

    def test_stable_near_zero(self):
        R = ScipyRotation.from_rotvec([1e-9, 0, 0]).as_matrix()
        assert rotation_angle_deg(R) == pytest.approx(np.degrees(1e-9), rel=1e-5)


class TestErrorMetrics:
    def test_identical_inputs_zero(self):
        R = rotation_from_euler_xyz([0.1, -0.2, 0.3])
        assert rotation_error(R, R, R, R) == 0.0

    def test_two_one_degree_offsets_sum(self):
        R = np.eye(3)
        dz = ScipyRotation.from_euler("z", 1.0, degrees=True).as_matrix()
        assert rotation_error(R, dz @ R, R, dz @ R) == pytest.approx(2.0, abs=1e-10)

    def test_symmetric_in_swap(self):
        rng = np.random.default_rng(6)
        A = ScipyRotation.random(random_state=rng).as_matrix()
        B = ScipyRotation.random(random_state=rng).as_matrix()
        assert rotation_error(A, B, A, B) == pytest.approx(rotation_error(B, A, B, A))

    def test_matches_quaternion_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            A = ScipyRotation.random(random_state=rng)
            B = ScipyRotation.random(random_state=rng)
            expected = 2 * np.degrees((A.inv() * B).magnitude())
            assert rotation_error(
                A.as_matrix(), B.as_matrix(), A.as_matrix(), B.as_matrix()
            ) == pytest.approx(expected, abs=1e-9)

    def test_translation_direction_basics(self):
        a = np.array([1.0, 0, 0])
        b = np.array([0, 1.0, 0])
        assert translation_direction_error(a, a, b, b) == 0.0
        assert translation_direction_error(a, b, a, b) == pytest.approx(180.0)

    def test_translation_scale_invariant_acos_oracle(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            a, b = rng.normal(size=3), rng.normal(size=3)
            expected = 2 * np.degrees(
                np.arccos(np.clip(a @ b / np.linalg.norm(a) / np.linalg.norm(b), -1, 1))
            )
            assert translation_direction_error(a, 3.0 * b, a, b) == pytest.approx(
                expected, abs=1e-8
            )

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            translation_direction_error([0, 0, 0], [1, 0, 0], [1, 0, 0], [1, 0, 0])


def test_random_axis_rotation_angle():
    rng = np.random.default_rng(9)
    for ang in (0.01, 0.1, 1.0):
        R = random_rotation_about_random_axis(rng, ang)
        assert rotation_angle_deg(R) == pytest.approx(np.degrees(ang), rel=1e-9)


def test_skew_cross_identity():
    rng = np.random.default_rng(10)
    a, b = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-14)
