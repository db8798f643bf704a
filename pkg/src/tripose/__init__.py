"""Three-view relative pose estimation from 2D point and line tracks.

Rotations are estimated by minimizing eigenvalue-based coplanarity costs
(epipolar-plane normals for points, back-projected-plane normals for lines)
with uncertainty-aware reweighting; translations are recovered afterwards,
up to gauge and scale, from a stacked linear system over the three global
camera positions.
"""

from .camera import (
    CameraIntrinsics,
    PlaneNormal,
    backprojected_normal,
    bearing_from_pixel,
    bearings_from_pixels,
    epipolar_normal,
)
from .costs import (
    CoplanarityMatrix,
    RotationProblem,
    combined_cost,
    line_coplanarity_matrix,
    min_eig_residual,
    point_coplanarity_matrix,
    triple_product_residual,
)
from .eig3 import eigh3, min_eigpair
from .irls import IrlsResult, irls_solve
from .lines import LineObservation, line_from_endpoints
from .lm import LMReport, lm_minimize
from .pipeline import (
    EstimationFailure,
    PoseEstimate,
    RansacConfig,
    estimate_three_view_pose,
    ransac_rotation,
    refine_three_view_pose,
)
from .rotations import (
    cayley_to_rotation,
    rotation_error,
    rotation_to_cayley,
    translation_direction_error,
)
from .synth import (
    ScenarioConfig,
    SceneGenerationError,
    ThreeViewScene,
    generate_scene,
    inject_outliers,
    make_planar,
    make_pure_rotation,
)
from .tracks import (
    LineTrack,
    PointTrack,
    line_track_from_endpoints,
    point_track_from_pixels,
    stack_line_tracks,
    stack_point_tracks,
)
from .trackio import IngestResult, TrackFileError, export_scene, ingest_tracks, write_tracks
from .translation import (
    TranslationSolution,
    estimate_line_directions,
    line_constraint_rows,
    point_constraint_rows,
    relative_from_global,
    solve_global_translations,
)
from .weights import (
    line_parameter_covariance,
    line_weights,
    normal_covariance_unscented,
    point_weights,
)

__version__ = "0.1.0"
