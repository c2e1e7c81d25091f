"""Robust weighted-Procrustes 9-DoF CAD alignment, retrieval and evaluation."""

from .errors import EmptyPoolError, IllConditionedGradientError, InputError, OracleError
from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    PointCloud,
    Pose9DoF,
    apply_pose,
    backproject,
    invert_pose,
    to_world,
)
from .procrustes import (
    CorrespondenceSet,
    SolveReport,
    initial_translation,
    irls_weights,
    refine_translation,
    solve_alignment,
    solve_irls,
    solve_rotation,
)

__version__ = "0.1.0"
