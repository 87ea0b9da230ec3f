"""geoseg: geometric losses, transforms, and lesion-wise metrics for
volumetric segmentation, plus synthetic phantoms and a direct map-optimization
harness for verifying the losses end to end at desk scale."""

from .volume import (
    BinaryMask,
    GridSpec,
    GvolError,
    ProbabilityMap,
    ScalarField,
    VolumeError,
    VoxelIndex,
    binarize,
    new_volume,
    read_gvol,
    write_gvol,
)
from .transforms import (
    Boundary,
    DistanceMap,
    GeometricOperator,
    NoBoundaryError,
    OpKind,
    Stencil,
    VectorField,
    boundary_voxels,
    edt,
    fog,
    fog_adjoint,
    sog,
)
from .losses import (
    CompositeLoss,
    Gamma,
    GeoLossSpec,
    GradCheckReport,
    LossResult,
    LossTerm,
    NonFiniteLossError,
    Psi,
    Theta,
    bce_loss,
    bce_spec,
    bd_loss,
    bd_spec,
    composite_eval,
    composite_from_json,
    composite_to_json,
    dice_loss,
    dice_spec,
    fog_loss,
    fog_spec,
    geo_eval,
    grad_check,
    hd_loss,
    hd_spec,
    prediction_distance_map,
    sog_loss,
    sog_spec,
    spec_from_json,
    spec_to_json,
)
from .metrics import (
    DEFAULT_THRESHOLDS,
    LabelMap,
    LesionMetrics,
    connected_components,
    dsc,
    lesion_metrics,
    metrics_dict,
    sweep_csv,
    threshold_sweep,
)
from .phantom import (
    Lesion,
    PerturbSpec,
    PhantomSpec,
    generate_phantom,
    perturb,
    phantom_manifest,
    phantom_spec_from_json,
    phantom_spec_to_json,
    sample_lesions,
)
from .optimize import (
    InitSpec,
    OptimConfig,
    OptimizationError,
    Trajectory,
    TrajectoryPoint,
    config_from_json,
    config_to_json,
    lr_at,
    optimize_map,
    trajectory_csv,
)

__version__ = "0.1.0"
