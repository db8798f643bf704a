import numpy as np
import pytest

from conftest import gt_state
from tripose.pipeline import (
    EstimationFailure,
    RansacConfig,
    classify_line_inliers,
    classify_point_inliers,
    estimate_three_view_pose,
    ransac_rotation,
    refine_three_view_pose,
)
from tripose.rotations import rotation_error, translation_direction_error
from tripose.synth import ScenarioConfig, generate_scene, inject_outliers
from tripose.tracks import stack_line_tracks, stack_point_tracks
from tripose.translation import relative_from_global


def outlier_scene(seed, n=100, fraction=0.2, noise=0.5):
    return generate_scene(
        ScenarioConfig(n, n, noise, outlier_fraction=fraction, rng_seed=seed)
    )


class TestClassification:
    def test_all_inliers_at_truth(self, noisy_scene):
        sc = noisy_scene
        pts = stack_point_tracks(sc.point_tracks)
        lns = stack_line_tracks(sc.line_tracks)
        pmask, _ = classify_point_inliers(pts, gt_state(sc), 1e-2)
        lmask, _ = classify_line_inliers(lns, gt_state(sc), 1e-2)
        assert pmask.all()
        assert lmask.all()

    def test_infinite_threshold_accepts_everything(self):
        sc = outlier_scene(0, n=30)
        pts = stack_point_tracks(sc.point_tracks)
        lns = stack_line_tracks(sc.line_tracks)
        pmask, _ = classify_point_inliers(pts, gt_state(sc), np.inf)
        lmask, _ = classify_line_inliers(lns, gt_state(sc), np.inf)
        assert pmask.all() and lmask.all()

    def test_outliers_rejected_at_truth(self):
        hits = total = 0
        for seed in range(5):
            sc = outlier_scene(seed, n=60)
            pts = stack_point_tracks(sc.point_tracks)
            lns = stack_line_tracks(sc.line_tracks)
            cfg = RansacConfig()
            pmask, _ = classify_point_inliers(pts, gt_state(sc), cfg.point_threshold)
            lmask, _ = classify_line_inliers(lns, gt_state(sc), cfg.line_threshold)
            pred_out = np.concatenate([~pmask, ~lmask])
            true_out = np.concatenate([sc.point_outliers, sc.line_outliers])
            hits += int((pred_out & true_out).sum())
            total += int(true_out.sum())
        assert hits / total > 0.95


class TestRansac:
    def test_inlier_recall_without_outliers(self):
        # Clean 0.5 px scenes: nearly every feature must be kept.
        kept = total = 0
        for seed in range(60):
            sc = generate_scene(ScenarioConfig(30, 30, 0.5, rng_seed=seed))
            pts = stack_point_tracks(sc.point_tracks)
            cfg = RansacConfig(rng_seed=seed)
            _, mask, _ = ransac_rotation(pts, None, "points", cfg)
            kept += int(mask.sum())
            total += mask.size
        assert kept / total > 0.99

    def test_failure_when_everything_is_outlier(self):
        sc = generate_scene(ScenarioConfig(40, 0, 0.5, rng_seed=1))
        broken = inject_outliers(sc, 0.95)
        # Replace the rest by hand so that literally nothing is consistent.
        broken = inject_outliers(broken, 0.9, rng=2)
        pts = stack_point_tracks(broken.point_tracks)
        with pytest.raises(EstimationFailure):
            ransac_rotation(pts, None, "points", RansacConfig(rng_seed=3, max_iterations=40))

    def test_too_few_features(self):
        sc = generate_scene(ScenarioConfig(5, 0, 0.5, rng_seed=2))
        pts = stack_point_tracks(sc.point_tracks)
        with pytest.raises(EstimationFailure):
            ransac_rotation(pts, None, "points", RansacConfig())


class TestFullPipeline:
    def test_deterministic(self):
        sc = outlier_scene(3, n=40)
        cfg = RansacConfig(rng_seed=3)
        a = estimate_three_view_pose(sc.point_tracks, sc.line_tracks, cfg)
        b = estimate_three_view_pose(sc.point_tracks, sc.line_tracks, cfg)
        np.testing.assert_array_equal(a.rotation_state, b.rotation_state)
        np.testing.assert_array_equal(a.point_inliers, b.point_inliers)
        np.testing.assert_array_equal(a.line_inliers, b.line_inliers)
        np.testing.assert_array_equal(
            a.translation.translations, b.translation.translations
        )

    def test_noiseless_exact_recovery(self):
        sc = generate_scene(ScenarioConfig(20, 20, 0.0, rng_seed=4))
        est = estimate_three_view_pose(sc.point_tracks, sc.line_tracks, RansacConfig(rng_seed=4))
        assert rotation_error(sc.gt_r10, est.r10, sc.gt_r12, est.r12) < 1e-5
        t01, t12 = sc.gt_relative_translations
        e01, e12 = relative_from_global(est.translation, est.r10)
        assert translation_direction_error(t01, e01, t12, e12) < 1e-5

    def test_outlier_robustness(self):
        sc = outlier_scene(5)
        est = estimate_three_view_pose(sc.point_tracks, sc.line_tracks, RansacConfig(rng_seed=5))
        assert rotation_error(sc.gt_r10, est.r10, sc.gt_r12, est.r12) < 0.5
        assert est.diagnostics["init_from"] == "points"

    def test_pure_rotation_flagged_with_noise(self):
        sc = generate_scene(ScenarioConfig(20, 20, 1.0, mode="pure_rotation", rng_seed=6))
        est = estimate_three_view_pose(sc.point_tracks, sc.line_tracks, RansacConfig(rng_seed=6))
        assert est.degenerate_translation
        assert rotation_error(sc.gt_r10, est.r10, sc.gt_r12, est.r12) < 0.5

    def test_lines_only_initialization_fallback(self):
        sc = generate_scene(ScenarioConfig(0, 25, 0.5, rng_seed=7))
        est = estimate_three_view_pose([], sc.line_tracks, RansacConfig(rng_seed=7))
        assert est.diagnostics["init_from"] == "lines"
        assert rotation_error(sc.gt_r10, est.r10, sc.gt_r12, est.r12) < 1.0

    def test_both_stages_failing_raises(self):
        with pytest.raises(EstimationFailure):
            estimate_three_view_pose([], [], RansacConfig())

    def test_monotone_outlier_robustness(self):
        # Median rotation error at 10% outliers must not exceed the median
        # at 20% (both over the same seeds).
        med = {}
        for frac in (0.1, 0.2):
            errs = []
            for seed in range(40):
                sc = generate_scene(
                    ScenarioConfig(40, 40, 0.5, outlier_fraction=frac, rng_seed=seed)
                )
                est = estimate_three_view_pose(
                    sc.point_tracks, sc.line_tracks, RansacConfig(rng_seed=seed)
                )
                errs.append(rotation_error(sc.gt_r10, est.r10, sc.gt_r12, est.r12))
            med[frac] = np.median(errs)
        assert med[0.1] <= med[0.2] * 1.2 + 1e-6

    def test_inner_solves_non_increasing(self):
        sc = outlier_scene(8, n=40)
        est = estimate_three_view_pose(sc.point_tracks, sc.line_tracks, RansacConfig(rng_seed=8))
        assert est.diagnostics["irls_converged"]


class TestRefine:
    def test_masks_match_inputs(self, noisy_scene):
        est = refine_three_view_pose(
            noisy_scene.point_tracks, noisy_scene.line_tracks, gt_state(noisy_scene)
        )
        assert est.point_inliers.shape == (15,)
        assert est.line_inliers.shape == (15,)
        assert est.point_inliers.all() and est.line_inliers.all()

    def test_empty_inputs_rejected(self):
        with pytest.raises(EstimationFailure):
            refine_three_view_pose([], [], np.zeros(6))
