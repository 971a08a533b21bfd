"""Multi-view RGB-D motion-capture annotation toolchain.

Converts calibrated multi-view 2D keypoint detections, depth maps, and
device timestamps into temporally consistent 3D keypoints, registered
parametric-body parameters, refined extrinsics, synchronized frame pairs,
and denoised point clouds, with a built-in synthetic-scene oracle for
end-to-end verification.
"""

__version__ = "0.1.0"

from .camgeom import (  # noqa: F401
    Camera,
    Intrinsics,
    Observation2D,
    RigidTransform,
    project,
    reprojection_error,
    triangulate_dlt,
)
from .kpanno import (  # noqa: F401
    AnnotationConfig,
    BoneLengths,
    KeypointFrame2D,
    KeypointSequence3D,
    SkeletonTopology,
    annotate_frame,
    filter_keypoints,
    median_bone_lengths,
    refine_sequence,
    select_cameras,
)
from .metrics import Metrics, mpjpe, pa_mpjpe  # noqa: F401
