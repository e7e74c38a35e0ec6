"""Cross-modal retinal image registration on unified vessel maps.

The pipeline registers a small-field-of-view vessel map (e.g. from
OCTA) onto a wide-field one (e.g. a color fundus photo): a
macula-centered crop roughly aligns the fields of view, vascular
junctions are detected on skeletons and matched brute-force, and the
coordinate transform is fitted by a RANSAC-then-polynomial cascade.
Ships with the full evaluation-metric suite and a synthetic
ground-truth generator so every numerical behavior is testable without
clinical data.
"""

from .crop import CropFrame, RoiBox, compute_crop, extract, lift_to_full, lower_to_crop
from .evaluation import (
    DatasetReport,
    PairEvaluation,
    acceptable_matches,
    aggregate_report,
    auc,
    classify_pair,
    point_errors,
    soft_dice,
)
from .fitting import (
    DegeneracyError,
    FitError,
    Homography,
    InsufficientDataError,
    NoConsensusError,
    Polynomial2D,
    RansacConfig,
    Transform,
    eval_transform,
    fit_homography_dlt,
    fit_polynomial,
    fit_ransac_polynomial,
    invert_for_warp,
    invert_on_grid,
    load_transform,
    ransac_homography,
    save_transform,
)
from .keypoints import (
    CorrespondenceSet,
    Keypoint,
    describe,
    detect_junctions,
    match_bruteforce,
)
from .pipeline import (
    PipelineConfig,
    RegistrationResult,
    degree_sweep,
    register_pair,
    run_dataset,
)
from .raster import StructuringElement, binarize, dilate, erode, load_image, opening, save_image
from .synth import SynthConfig, SynthProblem, make_dataset, make_problem, plant_transform
from .vessel import Skeleton, VesselMap, enhance_vesselness, skeletonize
from .warp import render_overlay, warp

__version__ = "0.1.0"
