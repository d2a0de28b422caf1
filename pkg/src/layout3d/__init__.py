"""Geometric toolkit for joint indoor layout estimation and 3D object detection.

Covers the non-neural core of the task: wall parameterization codecs,
voxel/BEV feature plumbing, ground-truth assignment, losses with verified
gradients, prediction decoding with NMS, benchmark metrics, and a
synthetic-scene harness that closes the loop from ground truth back to
perfect scores.
"""

from .assign import Assignment, AssignedPair, assign_objects, assign_walls
from .errors import (
    ArityMismatch,
    DegenerateNormal,
    DegenerateWall,
    DimensionMismatch,
    EmptyCloud,
    EmptyGrid,
    EmptyLevel,
    FloorMisaligned,
    Layout3DError,
    LengthMismatch,
    NonVerticalWall,
    NoGroundTruth,
    PlacementFailure,
    SceneAlignmentError,
    UnknownCategory,
)
from .geometry import (
    Box3,
    CategoryLevelMap,
    DetectedObject,
    Point,
    PointCloud,
    Scene,
    Wall,
    WallGeometry,
    canonicalize_wall,
    wall_geometry,
)
from .infer import (
    WallDecodeResult,
    decode_detections,
    decode_walls,
    nms_boxes,
    nms_walls,
    wall_distance,
    wall_distance_matrix,
)
from .losses import LossValue, TotalLoss, diou_loss, focal_loss, iou3d, l1_loss, total_loss
from .metrics import (
    EvalReport,
    MatchStats,
    evaluate,
    layout_f1_corner,
    layout_f1_projection,
    map_at,
    projection_iou,
)
from .pipeline import ClosedLoopResult, closed_loop, default_category_levels
from .synth import SynthConfig, generate_scene, perturb
from .voxels import (
    BevGrid,
    HeightProfile,
    LocationSet,
    MlpWeights,
    VoxelGrid,
    bev_pool,
    cap_points,
    coarsen,
    concat_height,
    locations,
    mlp_forward,
    voxelize,
    z_quantiles,
)
from .wall_codec import (
    Bev2HParams,
    Corner4Params,
    Lower2HParams,
    PqParams,
    SCHEMES,
    decode_bev,
    decode_corners4,
    decode_lower2h,
    decode_params,
    decode_pq,
    encode_bev,
    encode_corners4,
    encode_lower2h,
    encode_params,
    encode_pq,
    param_count,
)

__version__ = "0.1.0"
