import numpy as np
import pytest

from tripose.camera import backprojected_normals
from tripose.rotations import (
    cayley_to_rotation,
    random_rotation_about_random_axis,
    translation_direction_error,
)
from tripose.synth import ScenarioConfig, generate_scene
from tripose.tracks import stack_line_tracks, stack_point_tracks
from tripose.translation import (
    TranslationSolution,
    estimate_line_directions,
    line_constraint_rows,
    point_constraint_rows,
    relative_from_global,
    solve_global_translations,
)


def scene_rows(scene, R10=None, R12=None):
    R10 = scene.gt_r10 if R10 is None else R10
    R12 = scene.gt_r12 if R12 is None else R12
    points = stack_point_tracks(scene.point_tracks)
    lines = stack_line_tracks(scene.line_tracks)
    rows = [point_constraint_rows(points["rays"], R10, R12, points["observed"])]
    if lines["normals"].shape[0]:
        dirs, valid = estimate_line_directions(lines["normals"], R10, R12)
        rows.append(line_constraint_rows(lines["normals"], dirs, valid, R10, R12))
    cheir = (points["bearings"][:, 0], points["bearings"][:, 1], R10)
    return np.concatenate(rows, axis=0), cheir


class TestPointRows:
    def test_satisfied_at_truth(self, clean_scene):
        sc = clean_scene
        points = stack_point_tracks(sc.point_tracks)
        rows = point_constraint_rows(points["rays"], sc.gt_r10, sc.gt_r12, points["observed"])
        t = sc.gt_translations.reshape(9)
        np.testing.assert_allclose(rows @ t, 0.0, atol=1e-12)

    def test_rows_match_direct_epipolar_oracle(self, noisy_scene):
        # Each scalar row must match the pairwise epipolar constraint built
        # independently, after the same unit-norm row scaling.
        sc = noisy_scene
        points = stack_point_tracks(sc.point_tracks)
        rows = point_constraint_rows(points["rays"], sc.gt_r10, sc.gt_r12, points["observed"])
        R01 = sc.gt_r10.T
        R02 = sc.gt_r10.T @ sc.gt_r12
        R1G = sc.gt_r10
        m = points["rays"].shape[0]
        expected_rows = []
        for pair in ("01", "02", "12"):
            for i in range(m):
                f0, f1, f2 = points["rays"][i]
                raw = np.zeros(9)
                if pair == "01":
                    a = np.cross(f0, R01 @ f1)
                    raw[:3], raw[3:6] = -a, a
                elif pair == "02":
                    a = np.cross(f0, R02 @ f2)
                    raw[:3], raw[6:] = -a, a
                else:
                    a = R1G.T @ np.cross(f1, sc.gt_r12 @ f2)
                    raw[3:6], raw[6:] = -a, a
                expected_rows.append(raw / np.linalg.norm(raw))
        np.testing.assert_allclose(rows, np.array(expected_rows), atol=1e-12)

    def test_common_translation_null(self, clean_scene):
        points = stack_point_tracks(clean_scene.point_tracks)
        rows = point_constraint_rows(
            points["rays"], clean_scene.gt_r10, clean_scene.gt_r12, points["observed"]
        )
        v = np.array([0.3, -1.2, 0.7])
        np.testing.assert_allclose(rows @ np.tile(v, 3), 0.0, atol=1e-14)

    def test_two_view_tracks_give_single_rows(self, intr):
        from tripose.tracks import point_track_from_pixels

        pix = np.array([[10.0, 5.0], [12.0, 6.0], [np.nan, np.nan]])
        tr = point_track_from_pixels(pix, intr)
        pts = stack_point_tracks([tr])
        rows = point_constraint_rows(pts["rays"], np.eye(3), np.eye(3), pts["observed"])
        assert rows.shape[0] == 1  # only the 0-1 pair exists


class TestLineRows:
    def test_satisfied_at_truth(self, clean_scene):
        sc = clean_scene
        lines = stack_line_tracks(sc.line_tracks)
        dirs, valid = estimate_line_directions(lines["normals"], sc.gt_r10, sc.gt_r12)
        assert valid.all()
        rows = line_constraint_rows(lines["normals"], dirs, valid, sc.gt_r10, sc.gt_r12)
        np.testing.assert_allclose(rows @ sc.gt_translations.reshape(9), 0.0, atol=1e-10)

    def test_direction_sign_flip_invariant(self, clean_scene):
        sc = clean_scene
        lines = stack_line_tracks(sc.line_tracks)
        dirs, valid = estimate_line_directions(lines["normals"], sc.gt_r10, sc.gt_r12)
        rows = line_constraint_rows(lines["normals"], dirs, valid, sc.gt_r10, sc.gt_r12)
        flipped = line_constraint_rows(lines["normals"], -dirs, valid, sc.gt_r10, sc.gt_r12)
        # Both sign factors flip, so each row flips as a whole: the same
        # linear constraint.
        np.testing.assert_allclose(np.abs(rows), np.abs(flipped), atol=1e-12)
        np.testing.assert_allclose(rows, -flipped, atol=1e-12)

    def test_row_matches_projected_trifocal_oracle(self, clean_scene):
        # The row dotted with stacked translations equals the trifocal
        # identity projected onto the line direction.
        sc = clean_scene
        lines = stack_line_tracks(sc.line_tracks)
        dirs, valid = estimate_line_directions(lines["normals"], sc.gt_r10, sc.gt_r12)
        rows = line_constraint_rows(lines["normals"], dirs, valid, sc.gt_r10, sc.gt_r12)
        R01 = sc.gt_r10.T
        R02 = sc.gt_r10.T @ sc.gt_r12
        R1G = sc.gt_r10
        R2G = sc.gt_r12.T @ sc.gt_r10
        rng = np.random.default_rng(1)
        t = rng.normal(size=9)
        t0, t1, t2 = t[:3], t[3:6], t[6:]
        for i in range(rows.shape[0]):
            n0, n1, n2 = lines["normals"][i]
            u1 = np.cross(n0, R01 @ n1)
            u2 = np.cross(n0, R02 @ n2)
            term = u1 * (n2 @ (R2G @ (t0 - t2))) - u2 * (n1 @ (R1G @ (t0 - t1)))
            expected = dirs[i] @ term
            got = rows[i] @ t
            # Compare up to the positive row normalization.
            scale = abs(expected) / max(abs(got), 1e-300)
            np.testing.assert_allclose(abs(got) * scale, abs(expected), atol=1e-9)
            assert np.sign(got) == pytest.approx(np.sign(expected))

    def test_bitwise_bcd_identity(self, clean_scene):
        sc = clean_scene
        lines = stack_line_tracks(sc.line_tracks)
        dirs, valid = estimate_line_directions(lines["normals"], sc.gt_r10, sc.gt_r12)
        rows = line_constraint_rows(lines["normals"], dirs, valid, sc.gt_r10, sc.gt_r12)
        np.testing.assert_array_equal(rows[:, :3] + rows[:, 3:6] + rows[:, 6:], 0.0)


class TestDirectionEstimates:
    def test_noiseless_matches_truth(self, clean_scene):
        sc = clean_scene
        lines = stack_line_tracks(sc.line_tracks)
        dirs, valid = estimate_line_directions(lines["normals"], sc.gt_r10, sc.gt_r12)
        for i in range(len(sc.line_tracks)):
            d3 = sc.line_endpoints_3d[i, 1] - sc.line_endpoints_3d[i, 0]
            d3 /= np.linalg.norm(d3)
            assert abs(abs(dirs[i] @ d3) - 1.0) < 1e-8

    def test_error_decreases_with_noise(self):
        levels = (2.0, 0.5, 0.05)
        errs = []
        for noise in levels:
            tot = 0.0
            for seed in range(20):
                sc = generate_scene(ScenarioConfig(0, 10, noise, rng_seed=seed))
                lines = stack_line_tracks(sc.line_tracks)
                dirs, valid = estimate_line_directions(
                    lines["normals"], sc.gt_r10, sc.gt_r12, max_min_eig=np.inf
                )
                for i in range(10):
                    d3 = sc.line_endpoints_3d[i, 1] - sc.line_endpoints_3d[i, 0]
                    d3 /= np.linalg.norm(d3)
                    tot += np.degrees(np.arccos(np.clip(abs(dirs[i] @ d3), 0, 1)))
            errs.append(tot)
        assert errs[0] > errs[1] > errs[2]

    def test_misfit_line_rejected_by_threshold(self):
        # A track whose normals fit no single direction (a mismatched
        # correspondence) has a large minimal eigenvalue and is excluded;
        # mutually orthogonal normals are the extreme case.
        good = generate_scene(ScenarioConfig(0, 4, 0.0, rng_seed=2))
        lines = stack_line_tracks(good.line_tracks)
        bad = (good.gt_r10.T @ np.eye(3), np.eye(3), good.gt_r12.T @ np.eye(3))
        bad = np.stack([bad[0][:, 0], bad[1][:, 1], bad[2][:, 2]])[None]
        normals = np.concatenate([lines["normals"], bad], axis=0)
        _, valid = estimate_line_directions(normals, good.gt_r10, good.gt_r12, max_min_eig=0.05)
        assert valid[:4].all()
        assert not valid[4]

    def test_pure_rotation_overlap_keeps_small_min_eig(self):
        # Overlapping back-projected planes degrade the eigengap, not the
        # minimal eigenvalue, so the threshold does not fire on them; the
        # degeneracy is caught at the system level instead.
        sc = generate_scene(ScenarioConfig(0, 8, 0.5, mode="pure_rotation", rng_seed=2))
        lines = stack_line_tracks(sc.line_tracks)
        perturbed = random_rotation_about_random_axis(np.random.default_rng(3), 0.1)
        _, valid = estimate_line_directions(
            lines["normals"], perturbed @ sc.gt_r10, perturbed @ sc.gt_r12, max_min_eig=0.05
        )
        assert valid.all()


class TestSolve:
    def test_exact_recovery(self):
        sc = generate_scene(ScenarioConfig(10, 10, 0.0, rng_seed=4))
        A, cheir = scene_rows(sc)
        sol = solve_global_translations(A, cheirality=cheir)
        assert not sol.degenerate
        assert sol.sign_fixed
        t01, t12 = sc.gt_relative_translations
        e01, e12 = relative_from_global(sol, sc.gt_r10)
        assert translation_direction_error(t01, e01, t12, e12) < 1e-6

    def test_gauge_convention(self):
        sc = generate_scene(ScenarioConfig(10, 10, 0.0, rng_seed=5))
        A, cheir = scene_rows(sc)
        sol = solve_global_translations(A, cheirality=cheir)
        np.testing.assert_allclose(sol.translations[0], 0.0)
        assert np.linalg.norm(sol.translations[1]) == pytest.approx(1.0)

    def test_homogeneous_scaling_invariance(self):
        # Scaling each feature's homogeneous coordinates leaves the
        # direction unchanged (rows are re-normalized anyway).
        sc = generate_scene(ScenarioConfig(12, 0, 0.3, rng_seed=6))
        points = stack_point_tracks(sc.point_tracks)
        rows1 = point_constraint_rows(points["rays"], sc.gt_r10, sc.gt_r12, points["observed"])
        rng = np.random.default_rng(7)
        scaled = points["rays"] * rng.uniform(0.3, 4.0, size=(12, 3, 1))
        rows2 = point_constraint_rows(scaled, sc.gt_r10, sc.gt_r12, points["observed"])
        s1 = solve_global_translations(rows1)
        s2 = solve_global_translations(rows2)
        d1 = s1.translations.reshape(9)
        d2 = s2.translations.reshape(9)
        np.testing.assert_allclose(np.abs(d1 @ d2), np.linalg.norm(d1) * np.linalg.norm(d2), rtol=1e-9)

    def test_pure_rotation_rows_collapse(self):
        # Noiseless pure rotation: every constraint row vanishes, so there
        # is no translation system at all.
        sc = generate_scene(ScenarioConfig(10, 10, 0.0, mode="pure_rotation", rng_seed=8))
        points = stack_point_tracks(sc.point_tracks)
        rows = point_constraint_rows(points["rays"], sc.gt_r10, sc.gt_r12, points["observed"])
        assert rows.shape[0] == 0
        with pytest.raises(ValueError):
            solve_global_translations(rows)

    def test_rank_deficient_system_flagged(self):
        # Rows from a single frame pair leave the third translation
        # unconstrained: the second-smallest reduced singular value
        # vanishes and the direction-degeneracy flag must be raised.
        sc = generate_scene(ScenarioConfig(12, 0, 0.0, rng_seed=8))
        points = stack_point_tracks(sc.point_tracks)
        observed = points["observed"].copy()
        observed[:, 2] = False  # hide frame 2: only the 0-1 pair remains
        rows = point_constraint_rows(points["rays"], sc.gt_r10, sc.gt_r12, observed)
        assert rows.shape[0] >= 5
        sol = solve_global_translations(rows)
        assert sol.degenerate
        assert sol.translations is None
        with pytest.raises(ValueError):
            relative_from_global(sol, sc.gt_r10)

    def test_needs_five_rows(self):
        with pytest.raises(ValueError):
            solve_global_translations(np.zeros((4, 9)))

    def test_line_only_sign_unresolved(self):
        sc = generate_scene(ScenarioConfig(0, 12, 0.0, rng_seed=9))
        lines = stack_line_tracks(sc.line_tracks)
        dirs, valid = estimate_line_directions(lines["normals"], sc.gt_r10, sc.gt_r12)
        rows = line_constraint_rows(lines["normals"], dirs, valid, sc.gt_r10, sc.gt_r12)
        sol = solve_global_translations(rows)
        assert not sol.sign_fixed
        t01, t12 = sc.gt_relative_translations
        e01, e12 = relative_from_global(sol, sc.gt_r10)
        err = min(
            translation_direction_error(t01, e01, t12, e12),
            translation_direction_error(t01, -e01, t12, -e12),
        )
        assert err < 1e-5

    def test_relative_direction_gauge_invariance(self):
        # Shifting all global translations by a common vector changes
        # nothing after gauge fixing.
        sol = TranslationSolution(
            translations=np.array([[0.0, 0, 0], [0.6, 0.8, 0.0], [1.0, 1.0, 0.5]]),
            degenerate=False,
            singular_values=np.ones(6),
        )
        R10 = cayley_to_rotation([0.1, -0.05, 0.2])
        t01, t12 = relative_from_global(sol, R10)
        shifted = TranslationSolution(
            translations=sol.translations + np.array([0.3, -0.2, 0.9]),
            degenerate=False,
            singular_values=np.ones(6),
        )
        s01, s12 = relative_from_global(shifted, R10)
        np.testing.assert_allclose(t01, s01, atol=1e-12)
        np.testing.assert_allclose(t12, s12, atol=1e-12)

    def test_rotation_perturbation_fusion_helps(self):
        # With perturbed rotations and no noise, the combined system should
        # be at least as accurate as each single-type system on average.
        errs = {"points": [], "lines": [], "both": []}
        rng = np.random.default_rng(10)
        for seed in range(40):
            sc = generate_scene(ScenarioConfig(10, 10, 0.0, rng_seed=100 + seed))
            dr = random_rotation_about_random_axis(rng, np.radians(2.0))
            R10 = dr @ sc.gt_r10
            dr2 = random_rotation_about_random_axis(rng, np.radians(2.0))
            R12 = dr2 @ sc.gt_r12
            points = stack_point_tracks(sc.point_tracks)
            lines = stack_line_tracks(sc.line_tracks)
            prow = point_constraint_rows(points["rays"], R10, R12, points["observed"])
            dirs, valid = estimate_line_directions(lines["normals"], R10, R12)
            lrow = line_constraint_rows(lines["normals"], dirs, valid, R10, R12)
            cheir = (points["bearings"][:, 0], points["bearings"][:, 1], R10)
            t01, t12 = sc.gt_relative_translations
            for name, A in (("points", prow), ("lines", lrow), ("both", np.concatenate([prow, lrow]))):
                sol = solve_global_translations(A, cheirality=cheir if "p" in name or name == "both" else None)
                if sol.degenerate:
                    errs[name].append(180.0)
                    continue
                e01, e12 = relative_from_global(sol, R10)
                err = translation_direction_error(t01, e01, t12, e12)
                if not sol.sign_fixed:
                    err = min(err, translation_direction_error(t01, -e01, t12, -e12))
                errs[name].append(err)
        assert np.mean(errs["both"]) <= np.mean(errs["points"]) + 1e-9
        assert np.mean(errs["both"]) <= np.mean(errs["lines"]) + 1e-9
