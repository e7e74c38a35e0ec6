"""End-to-end registration pipeline and dataset harness.

Per pair: optionally crop the wide-field target around the macula, turn
both vessel maps into skeletons, optionally coarsen one side by a
morphological opening (simulating cross-modal loss of capillary
detail), detect and match junction keypoints, then fit the
source-to-target transform in the crop frame and compose it with the
crop origin so the result lives in the full target frame. Estimation
failures surface as a failed registration result, never as a crash, so
dataset rates stay computable.

Manifest entries may carry a ``matches`` path pointing at a
correspondence JSON; such pairs skip detection/matching and fit
directly on the provided set (used by the polynomial degree sweep,
where the correspondence noise must be controlled).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import evaluation
from .crop import CropFrame, RoiBox, compute_crop, extract, load_rois
from .evaluation import DatasetReport, PairEvaluation, aggregate_report
from .fitting import (
    FitError,
    RansacConfig,
    Transform,
    fit_polynomial,
    fit_ransac_polynomial,
    invert_for_warp,
    load_transform,
    ransac_homography,
)
from .keypoints import CorrespondenceSet, describe_all, detect_junctions, match_bruteforce
from .raster import StructuringElement, binarize, load_image, opening, save_rgb
from .vessel import VesselMap, skeletonize
from .warp import render_overlay, warp

FIT_STRATEGIES = ("ransac_only", "poly_only", "ransac_poly")
OPENING_SIDES = ("source", "target")


@dataclass
class MetricThresholds:
    mee_acceptable: float = evaluation.MEE_ACCEPTABLE
    mae_acceptable: float = evaluation.MAE_ACCEPTABLE
    auc_t_max: int = evaluation.AUC_T_MAX
    match_tolerance: float = evaluation.MATCH_TOLERANCE


@dataclass
class PipelineConfig:
    """Switchboard for the full pipeline; defaults follow the method's
    operating point (crop on, cascade fitting with a quadratic).

    ``opening_enabled`` may be "auto": the coarsening then turns on
    exactly for OCTA-source / wide-field-CFP-target pairs, the modality
    combination whose capillary-detail gap it simulates.
    """

    crop_enabled: bool = True
    crop_radius_mode: str = "farthest_corner"
    opening_enabled: bool | str = "auto"
    opening_side: str = "source"
    opening_radius: int = 1
    opening_shape: str = "square"
    fit_strategy: str = "ransac_poly"
    poly_degree: int = 2
    ransac: RansacConfig = field(default_factory=RansacConfig)
    match_ratio: float = 0.8
    cross_check: bool = True
    binarize_threshold: float = 0.5
    nms_radius: float = 5.0
    patch_radius: int = 16
    enhance_scales: tuple = (1.0, 2.0, 3.0)
    thresholds: MetricThresholds = field(default_factory=MetricThresholds)
    write_overlays: bool = False

    def __post_init__(self):
        if self.fit_strategy not in FIT_STRATEGIES:
            raise ValueError(f"fit_strategy must be one of {FIT_STRATEGIES}")
        if self.opening_side not in OPENING_SIDES:
            raise ValueError(f"opening_side must be one of {OPENING_SIDES}")
        if self.opening_enabled not in (True, False, "auto"):
            raise ValueError(f"opening_enabled must be True, False or 'auto', "
                             f"got {self.opening_enabled!r}")
        if self.poly_degree < 1:
            raise ValueError(f"poly_degree must be >= 1, got {self.poly_degree}")

    def opening_active(self, source_modality: str, target_modality: str) -> bool:
        if self.opening_enabled == "auto":
            return source_modality == "octa" and target_modality == "wfcfp"
        return self.opening_enabled

    def to_json_dict(self) -> dict:
        doc = {k: getattr(self, k) for k in (
            "crop_enabled", "crop_radius_mode", "opening_enabled", "opening_side",
            "opening_radius", "opening_shape", "fit_strategy", "poly_degree",
            "match_ratio", "cross_check", "binarize_threshold", "nms_radius",
            "patch_radius", "write_overlays")}
        doc["enhance_scales"] = list(self.enhance_scales)
        doc["ransac"] = {"reproj_threshold": self.ransac.reproj_threshold,
                         "max_iterations": self.ransac.max_iterations,
                         "confidence": self.ransac.confidence,
                         "seed": self.ransac.seed}
        doc["thresholds"] = {"mee_acceptable": self.thresholds.mee_acceptable,
                             "mae_acceptable": self.thresholds.mae_acceptable,
                             "auc_t_max": self.thresholds.auc_t_max,
                             "match_tolerance": self.thresholds.match_tolerance}
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        ransac = RansacConfig(**doc.pop("ransac", {}))
        thresholds = MetricThresholds(**doc.pop("thresholds", {}))
        if "enhance_scales" in doc:
            doc["enhance_scales"] = tuple(doc["enhance_scales"])
        return cls(ransac=ransac, thresholds=thresholds, **doc)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


@dataclass
class RegistrationResult:
    """Outcome of one pair: a full-target-frame transform or a failure tag."""

    transform: Transform | None
    correspondences: CorrespondenceSet
    inlier_mask: np.ndarray | None
    diagnostics: dict
    failure: str | None = None

    @property
    def failed(self) -> bool:
        return self.transform is None

    def inliers(self) -> CorrespondenceSet:
        if self.inlier_mask is None:
            return self.correspondences
        return self.correspondences.subset(self.inlier_mask)


def _fit(P: CorrespondenceSet, cfg: PipelineConfig):
    """(model, inlier_mask) in the frame P lives in, per the fit strategy."""
    if cfg.fit_strategy == "ransac_only":
        return ransac_homography(P, cfg.ransac)
    if cfg.fit_strategy == "poly_only":
        return fit_polynomial(P, cfg.poly_degree), np.ones(P.m, dtype=bool)
    return fit_ransac_polynomial(P, cfg.ransac, cfg.poly_degree)


def _failed(P: CorrespondenceSet, diagnostics: dict, exc: Exception) -> RegistrationResult:
    diagnostics["failure"] = f"{type(exc).__name__}: {exc}"
    return RegistrationResult(None, P, None, diagnostics, failure=str(exc))


def register_pair(source: VesselMap, target: VesselMap,
                  rois: tuple[RoiBox, RoiBox] | None = None,
                  cfg: PipelineConfig = PipelineConfig()) -> RegistrationResult:
    """Register a source vessel map onto a (possibly cropped) target map.

    Returns a full-target-frame transform: fitting happens in the crop
    frame, which keeps polynomial coefficients conditioned on
    crop-local coordinates, and the crop origin rides along as the
    transform's trailing translation. The returned correspondences are
    already lifted to the full frame.
    """
    frame: CropFrame | None = None
    target_grid = target.grid
    if cfg.crop_enabled:
        if rois is None:
            raise ValueError("crop_enabled requires macula/optic-disc ROI boxes")
        macula, od = rois
        h, w = target.grid.shape
        frame = compute_crop(macula, od, w, h, radius_mode=cfg.crop_radius_mode)
        target_grid = extract(target.grid, frame)

    # Both sides are described on the binarized map their skeleton comes
    # from: a common substrate matches far better across the warp than
    # binary-vs-probability patches, and the opening's coarsening is then
    # seen end to end (skeleton, keypoints, and descriptors alike).
    src_binary = binarize(source.grid, cfg.binarize_threshold)
    tgt_binary = binarize(target_grid, cfg.binarize_threshold)
    if cfg.opening_active(source.modality, target.modality):
        se = StructuringElement(cfg.opening_radius, cfg.opening_shape)
        if cfg.opening_side == "source":
            src_binary = opening(src_binary, se)
        else:
            tgt_binary = opening(tgt_binary, se)

    src_kps = detect_junctions(skeletonize(src_binary), cfg.nms_radius)
    tgt_kps = detect_junctions(skeletonize(tgt_binary), cfg.nms_radius)
    matches = match_bruteforce(describe_all(src_binary, src_kps, cfg.patch_radius),
                               describe_all(tgt_binary, tgt_kps, cfg.patch_radius),
                               ratio=cfg.match_ratio, cross_check=cfg.cross_check)

    diagnostics = {"n_source_keypoints": len(src_kps),
                   "n_target_keypoints": len(tgt_kps),
                   "n_matches": matches.m,
                   "opening_applied": cfg.opening_active(source.modality, target.modality),
                   "crop": None if frame is None else
                   {"origin": list(frame.origin), "side": frame.side}}

    offset = (0.0, 0.0) if frame is None else (float(frame.origin[0]), float(frame.origin[1]))
    full_matches = CorrespondenceSet(matches.src, matches.tgt + np.asarray(offset))
    try:
        model, mask = _fit(matches, cfg)
    except FitError as exc:
        return _failed(full_matches, diagnostics, exc)
    diagnostics["n_inliers"] = int(mask.sum())
    return RegistrationResult(Transform(model, offset), full_matches, mask, diagnostics)


def register_from_matches(matches: CorrespondenceSet,
                          rois: tuple[RoiBox, RoiBox] | None,
                          target_shape: tuple[int, int],
                          cfg: PipelineConfig = PipelineConfig()) -> RegistrationResult:
    """Fit only, from a provided source-to-full-target correspondence set."""
    offset = (0.0, 0.0)
    work = matches
    if cfg.crop_enabled and rois is not None:
        macula, od = rois
        h, w = target_shape
        frame = compute_crop(macula, od, w, h, radius_mode=cfg.crop_radius_mode)
        offset = (float(frame.origin[0]), float(frame.origin[1]))
        work = CorrespondenceSet(matches.src, matches.tgt - np.asarray(offset))
    diagnostics = {"n_matches": matches.m, "provided_matches": True}
    try:
        model, mask = _fit(work, cfg)
    except FitError as exc:
        return _failed(matches, diagnostics, exc)
    diagnostics["n_inliers"] = int(mask.sum())
    return RegistrationResult(Transform(model, offset), matches, mask, diagnostics)


# ---------------------------------------------------------------------------
# Dataset harness
# ---------------------------------------------------------------------------

def load_manifest(path) -> list[dict]:
    path = Path(path)
    try:
        entries = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"unreadable manifest {path}: {exc}") from exc
    if not isinstance(entries, list) or not entries:
        raise ValueError(f"manifest {path} must be a non-empty list of pair entries")
    for entry in entries:
        for key in ("id", "source", "target"):
            if key not in entry:
                raise ValueError(f"manifest entry missing {key!r}: {entry}")
    return sorted(entries, key=lambda e: str(e["id"]))


def _resolve(base: Path, value):
    if value is None:
        return None
    p = Path(value)
    return p if p.is_absolute() else base / p


def evaluate_pair_result(pair_id: str, result: RegistrationResult,
                         gt: CorrespondenceSet,
                         source: VesselMap, target: VesselMap,
                         cfg: PipelineConfig,
                         gt_transform: Transform | None = None,
                         overlay_path=None) -> PairEvaluation:
    """Metrics for one registered pair, including the vessel-overlap Dice
    of the warped source; failed fits yield the failed class with no Dice."""
    thr = cfg.thresholds
    if result.failed:
        mee, mae, label = evaluation.classify_pair([], fit_failed=True)
        dice = None
    else:
        errors = evaluation.point_errors(result.transform, gt)
        mee, mae, label = evaluation.classify_pair(
            errors, mee_threshold=thr.mee_acceptable, mae_threshold=thr.mae_acceptable)
        dice = None
        try:
            inverse = invert_for_warp(result.transform, result.inliers(), cfg.poly_degree)
            h, w = target.grid.shape
            warped = warp(source.grid, inverse, w, h)
            dice = evaluation.soft_dice(warped, target.grid)
            if overlay_path is not None:
                save_rgb(overlay_path, render_overlay(warped, target.grid))
        except FitError:
            dice = None

    n_acceptable = None
    if gt_transform is not None and not result.failed:
        n_acceptable = evaluation.acceptable_matches(
            result.correspondences, gt_transform, thr.match_tolerance)
    return PairEvaluation(pair_id, mee, mae, label,
                          n_matches=result.correspondences.m,
                          n_acceptable_matches=n_acceptable,
                          dice_s=dice)


def run_pair_entry(entry: dict, base: Path, cfg: PipelineConfig,
                   out_dir: Path | None = None) -> PairEvaluation:
    source = VesselMap(load_image(_resolve(base, entry["source"])),
                       entry.get("source_modality", "unknown"))
    target = VesselMap(load_image(_resolve(base, entry["target"])),
                       entry.get("target_modality", "unknown"))
    rois = None
    if entry.get("rois"):
        rois = load_rois(_resolve(base, entry["rois"]))
    gt_path = entry.get("gt")
    if not gt_path:
        raise ValueError(f"pair {entry['id']}: dataset runs require a 'gt' correspondence file")
    gt = CorrespondenceSet.load(_resolve(base, gt_path))

    if entry.get("matches"):
        matches = CorrespondenceSet.load(_resolve(base, entry["matches"]))
        result = register_from_matches(matches, rois, target.grid.shape, cfg)
    else:
        result = register_pair(source, target, rois, cfg)

    gt_transform = None
    if entry.get("gt_transform"):
        gt_transform = load_transform(_resolve(base, entry["gt_transform"]))

    overlay_path = None
    if out_dir is not None and cfg.write_overlays:
        overlay_path = out_dir / f"overlay_{entry['id']}.png"
    return evaluate_pair_result(str(entry["id"]), result, gt, source, target, cfg,
                                gt_transform, overlay_path)


def run_dataset(manifest, cfg: PipelineConfig = PipelineConfig(),
                out_dir=None) -> DatasetReport:
    """Register and evaluate every manifest pair; aggregate a DatasetReport.

    Per-pair failures are recorded in the report, never abort the run.
    With ``out_dir`` set, writes report.json (pairs sorted by id, stable
    bytes for identical inputs) and report.csv.
    """
    manifest = Path(manifest)
    entries = load_manifest(manifest)
    base = manifest.parent
    out_path = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

    evals = [run_pair_entry(entry, base, cfg, out_path) for entry in entries]
    report = aggregate_report(evals, cfg.thresholds.auc_t_max)
    if out_path is not None:
        report.save(out_path / "report.json")
        (out_path / "report.csv").write_text(
            DatasetReport.CSV_HEADER + "\n" + report.to_csv_row() + "\n")
    return report


def degree_sweep(manifest, cfg: PipelineConfig,
                 degrees) -> list[tuple[int, DatasetReport]]:
    """Run the dataset once per polynomial degree with cascade fitting."""
    degrees = list(degrees)
    if not degrees:
        raise ValueError("degrees must be non-empty")
    rows = []
    for n in degrees:
        cfg_n = replace(cfg, fit_strategy="ransac_poly", poly_degree=int(n))
        rows.append((int(n), run_dataset(manifest, cfg_n)))
    return rows


def sweep_to_csv(rows: list[tuple[int, DatasetReport]]) -> str:
    lines = ["degree," + DatasetReport.CSV_HEADER]
    for n, report in rows:
        lines.append(f"{n}," + report.to_csv_row())
    return "\n".join(lines) + "\n"
