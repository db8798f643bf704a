import numpy as np
import pytest

from conftest import gt_state
from tripose.costs import (
    CoplanarityMatrix,
    RotationProblem,
    combined_cost,
    line_coplanarity_matrix,
    min_eig_residual,
    point_coplanarity_matrix,
    triple_product_residual,
)
from tripose.eig3 import eigh3
from tripose.irls import build_problem
from tripose.rotations import cayley_to_rotation, rotation_to_cayley
from tripose.synth import ScenarioConfig, generate_scene
from tripose.tracks import stack_line_tracks, stack_point_tracks


def fibonacci_sphere(n):
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    theta = np.pi * (1 + 5**0.5) * k
    return np.stack(
        [np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], axis=-1
    )


class TestPointCoplanarityMatrix:
    def test_zero_at_truth(self, clean_scene):
        sc = clean_scene
        pts = stack_point_tracks(sc.point_tracks)
        M = point_coplanarity_matrix(
            pts["bearings"][:, 1], pts["bearings"][:, 0], sc.gt_r10
        )
        assert M.min_eigenvalue < 1e-18

    def test_single_track_rank_one(self):
        b0 = np.array([[0.1, 0.2, 0.97]])
        b1 = np.array([[0.0, 0.0, 1.0]])
        M = point_coplanarity_matrix(b1, b0, np.eye(3))
        w = np.sort(np.linalg.eigvalsh(M.M))
        assert w[0] == pytest.approx(0.0, abs=1e-15)
        assert w[1] == pytest.approx(0.0, abs=1e-15)
        assert w[2] > 0

    def test_sphere_sampling_oracle(self, clean_scene):
        # lambda_min must match a dense minimization of sum (t . n)^2 over
        # a million unit directions, within 1%.
        sc = clean_scene
        pts = stack_point_tracks(sc.point_tracks)
        dR = cayley_to_rotation(np.tan(np.radians(1.0) / 2) * np.array([0, 0, 1.0]))
        M = point_coplanarity_matrix(
            pts["bearings"][:, 1], pts["bearings"][:, 0], dR @ sc.gt_r10
        )
        dirs = fibonacci_sphere(1_000_000)
        vals = np.einsum("ki,ij,kj->k", dirs, M.M, dirs)
        assert M.min_eigenvalue == pytest.approx(vals.min(), rel=0.01)

    def test_near_parallel_term_skipped(self):
        b = np.array([[0.0, 0.0, 1.0], [0.1, 0.0, 0.995]])
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        M = point_coplanarity_matrix(b, b, np.eye(3))  # identical rays: all skipped
        np.testing.assert_allclose(M.M, 0.0, atol=1e-20)


class TestLineCoplanarityMatrix:
    def test_zero_at_truth_with_direction(self, clean_scene):
        sc = clean_scene
        for i, tr in enumerate(sc.line_tracks[:5]):
            M = line_coplanarity_matrix(tr.normals, sc.gt_r10, sc.gt_r12)
            assert M.min_eigenvalue < 1e-18
            d3 = sc.line_endpoints_3d[i, 1] - sc.line_endpoints_3d[i, 0]
            d_frame1 = sc.gt_r10 @ d3
            d_frame1 /= np.linalg.norm(d_frame1)
            assert abs(abs(M.direction @ d_frame1) - 1.0) < 1e-8

    def test_orthonormal_triplet_unit_eigenvalues(self):
        M = line_coplanarity_matrix(np.eye(3), np.eye(3), np.eye(3))
        np.testing.assert_allclose(M.eigenvalues, 1.0, atol=1e-12)

    def test_eigenpairs_match_charpoly_oracle(self):
        rng = np.random.default_rng(0)
        normals = rng.normal(size=(3, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        M = line_coplanarity_matrix(
            normals, cayley_to_rotation([0.1, 0, 0]), cayley_to_rotation([0, 0.1, 0])
        )
        c2 = -np.trace(M.M)
        c1 = 0.5 * (np.trace(M.M) ** 2 - np.trace(M.M @ M.M))
        c0 = -np.linalg.det(M.M)
        roots = np.sort(np.roots([1.0, c2, c1, c0]).real)
        np.testing.assert_allclose(M.eigenvalues, roots, atol=1e-9)


class TestResidualForms:
    def test_coplanar_normals_zero(self):
        n0 = np.array([1.0, 0, 0])
        n1 = np.array([0.6, 0.8, 0])
        n2 = np.array([0.0, 1.0, 0])
        assert triple_product_residual(n0, n1, n2) == pytest.approx(0.0, abs=1e-15)
        M = CoplanarityMatrix.from_matrix(np.array([n0, n1, n2]).T @ np.array([n0, n1, n2]))
        assert min_eig_residual(M) == pytest.approx(0.0, abs=1e-12)

    def test_orthonormal_triplet(self):
        assert triple_product_residual(*np.eye(3)) == pytest.approx(1.0)
        assert min_eig_residual(np.eye(3)) == pytest.approx(1.0)

    def test_triple_squared_equals_det(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            n = rng.normal(size=(3, 3))
            n /= np.linalg.norm(n, axis=1, keepdims=True)
            M = n.T @ n
            e = triple_product_residual(n[0], n[1], n[2])
            assert abs(e**2 - np.linalg.det(M)) < 1e-10
            w, _ = eigh3(M)
            assert abs(e**2 - np.prod(np.maximum(w, 0))) < 1e-10


class TestCombinedCost:
    def test_zero_at_truth(self, clean_scene):
        sc = clean_scene
        prob = build_problem(
            stack_point_tracks(sc.point_tracks), stack_line_tracks(sc.line_tracks)
        )
        E, residuals = combined_cost(gt_state(sc), prob)
        assert E < 1e-16
        assert residuals.shape == (45,)
        assert np.abs(residuals).max() < 1e-12

    @pytest.mark.parametrize("form", ["triple", "min-eig"])
    def test_gradient_matches_finite_differences(self, form):
        # 100 random states across several scenes; relative error < 1e-5.
        worst = 0.0
        count = 0
        for seed in range(10):
            sc = generate_scene(ScenarioConfig(8, 8, 0.5, rng_seed=seed))
            prob = build_problem(
                stack_point_tracks(sc.point_tracks),
                stack_line_tracks(sc.line_tracks),
                line_form=form,
            )
            rng = np.random.default_rng(seed)
            for _ in range(10):
                x = gt_state(sc) + rng.normal(size=6) * 0.1
                r, J = prob.evaluate(x[None])
                g = 2 * np.einsum("brn,br->bn", J, r)[0]
                eps = 1e-6
                gfd = np.zeros(6)
                for k in range(6):
                    d = np.zeros(6)
                    d[k] = eps
                    gfd[k] = (prob.cost(x[None] + d)[0] - prob.cost(x[None] - d)[0]) / (2 * eps)
                worst = max(worst, np.abs(g - gfd).max() / max(np.abs(gfd).max(), 1e-12))
                count += 1
        assert count == 100
        assert worst < 1e-5

    def test_gauge_invariance(self, noisy_scene):
        # Re-orienting the middle frame (and the state with it) leaves the
        # cost unchanged: it is a function of relative geometry only.
        sc = noisy_scene
        pts = stack_point_tracks(sc.point_tracks)
        lns = stack_line_tracks(sc.line_tracks)
        rng = np.random.default_rng(2)
        Q = cayley_to_rotation(rng.normal(size=3) * 0.4)
        x = gt_state(sc) + rng.normal(size=6) * 0.05
        prob = build_problem(pts, lns)
        base = prob.cost(x[None])[0]

        pts2 = {k: v.copy() for k, v in pts.items()}
        pts2["bearings"] = pts["bearings"].copy()
        pts2["bearings"][:, 1] = pts["bearings"][:, 1] @ Q.T
        lns2 = {k: v.copy() for k, v in lns.items()}
        lns2["normals"] = lns["normals"].copy()
        lns2["normals"][:, 1] = lns["normals"][:, 1] @ Q.T
        R10 = Q @ cayley_to_rotation(x[:3])
        R12 = Q @ cayley_to_rotation(x[3:])
        x2 = np.concatenate([rotation_to_cayley(R10), rotation_to_cayley(R12)])
        prob2 = build_problem(pts2, lns2)
        assert prob2.cost(x2[None])[0] == pytest.approx(base, rel=1e-10)

    def test_permutation_invariance(self, noisy_scene):
        sc = noisy_scene
        rng = np.random.default_rng(3)
        x = gt_state(sc) + rng.normal(size=6) * 0.03
        prob = build_problem(
            stack_point_tracks(sc.point_tracks), stack_line_tracks(sc.line_tracks)
        )
        base = prob.cost(x[None])[0]
        perm_pts = [sc.point_tracks[i] for i in rng.permutation(len(sc.point_tracks))]
        perm_lns = [sc.line_tracks[i] for i in rng.permutation(len(sc.line_tracks))]
        prob2 = build_problem(stack_point_tracks(perm_pts), stack_line_tracks(perm_lns))
        assert prob2.cost(x[None])[0] == pytest.approx(base, rel=1e-12)

    def test_rejects_unknown_form(self):
        with pytest.raises(ValueError):
            RotationProblem(line_normals=np.zeros((2, 3, 3)), line_form="nope")

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            RotationProblem()
