import numpy as np
import pytest

from tripose import CameraIntrinsics, ScenarioConfig, generate_scene


@pytest.fixture
def intr():
    return CameraIntrinsics(fx=800.0, fy=800.0, cx=0.0, cy=0.0)


@pytest.fixture
def intr_offset():
    return CameraIntrinsics(fx=800.0, fy=800.0, cx=400.0, cy=300.0)


@pytest.fixture
def clean_scene():
    """Noiseless 15+15 general scene."""
    return generate_scene(ScenarioConfig(n_points=15, n_lines=15, noise_std=0.0, rng_seed=7))


@pytest.fixture
def noisy_scene():
    return generate_scene(ScenarioConfig(n_points=15, n_lines=15, noise_std=0.5, rng_seed=11))


def gt_state(scene):
    from tripose.rotations import rotation_to_cayley

    return np.concatenate(
        [rotation_to_cayley(scene.gt_r10), rotation_to_cayley(scene.gt_r12)]
    )
