"""Synthetic registration problems with exact ground truth.

Each problem is a rendered vessel-like branching tree (the source), the
same tree warped under a planted transform (the target), a noisy
correspondence set with flagged gross outliers for fitting, and the
planted transform itself for evaluation. Every quantity is a pure
function of the seed, so problems are byte-reproducible.

Rendering aims for detectable junction structure, not realism: branch
widths taper from trunk to capillary so that coarsening one side of a
pair (the morphological-opening augmentation) removes fine detail the
other side keeps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .crop import RoiBox, save_rois
from .fitting import (
    Homography,
    Polynomial2D,
    Transform,
    invert_on_grid,
    monomial_exponents,
    rebase_coefficients,
    save_transform,
)
from .keypoints import CorrespondenceSet, detect_junctions
from .raster import binarize, save_image
from .vessel import skeletonize
from .warp import warp

TRANSFORM_KINDS = ("homography", "quadratic")

# Homography perturbation bounds (rotation about the image center).
MAX_ROTATION_DEG = 15.0
SCALE_RANGE = (0.9, 1.1)
MAX_TRANSLATION_FRACTION = 0.1
PROJECTIVE_SLACK = 0.03  # |h20|, |h21| <= this / image_size


@dataclass
class SynthConfig:
    seed: int = 0
    image_size: int = 640
    transform_kind: str = "quadratic"
    coefficient_scale: float = 8.0
    noise_sigma: float = 0.0
    outlier_fraction: float = 0.0
    n_points: int = 50

    def __post_init__(self):
        if self.transform_kind not in TRANSFORM_KINDS:
            raise ValueError(f"transform_kind must be one of {TRANSFORM_KINDS}")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError(f"outlier_fraction must be in [0, 1), got {self.outlier_fraction}")
        minimal = 4 if self.transform_kind == "homography" else 6
        if self.n_points < minimal:
            raise ValueError(f"n_points must be >= {minimal} for {self.transform_kind}")

    def to_json_dict(self) -> dict:
        return {"seed": self.seed, "image_size": self.image_size,
                "transform_kind": self.transform_kind,
                "coefficient_scale": self.coefficient_scale,
                "noise_sigma": self.noise_sigma,
                "outlier_fraction": self.outlier_fraction,
                "n_points": self.n_points}


@dataclass
class SynthProblem:
    source_img: np.ndarray
    target_img: np.ndarray
    gt_transform: Transform
    correspondences: CorrespondenceSet
    outlier_mask: np.ndarray
    gt_points: CorrespondenceSet = None  # exact held-out pairs for evaluation
    config: SynthConfig = field(repr=False, default=None)


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


# ---------------------------------------------------------------------------
# Transform planting
# ---------------------------------------------------------------------------

def plant_transform(cfg: SynthConfig) -> Transform:
    """Sample a bounded ground-truth transform, deterministic per seed.

    Homographies are identity plus a rotation of at most 15 degrees
    about the image center, scale in [0.9, 1.1], translation up to 10%
    of the image side and mild projective terms. Quadratics keep an
    identity linear part; second-order coefficients are scaled so the
    largest deviation from the linear part over the image is
    ``coefficient_scale`` pixels.
    """
    rng = _rng(cfg.seed, 0)
    size = float(cfg.image_size)
    if cfg.transform_kind == "homography":
        theta = np.deg2rad(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))
        s = rng.uniform(*SCALE_RANGE)
        tx, ty = rng.uniform(-MAX_TRANSLATION_FRACTION * size,
                             MAX_TRANSLATION_FRACTION * size, 2)
        gx, gy = rng.uniform(-PROJECTIVE_SLACK / size, PROJECTIVE_SLACK / size, 2)
        core = np.array([[s * np.cos(theta), -s * np.sin(theta), tx],
                         [s * np.sin(theta), s * np.cos(theta), ty],
                         [gx, gy, 1.0]])
        c = size / 2.0
        recenter = Homography.translation(c, c).h @ core @ Homography.translation(-c, -c).h
        return Transform(Homography(recenter))

    # Quadratic: identity plus a pure second-order deviation field anchored
    # at the image center (like radial distortion), scaled to peak at
    # coefficient_scale pixels over the frame. Centering matters: a field
    # anchored at a corner is mostly absorbable by an affine fit over the
    # frame's interior, which would defeat degree-ablation studies.
    exps = monomial_exponents(2)
    coef_x = np.zeros(6)
    coef_y = np.zeros(6)
    coef_x[exps.index((1, 0))] = 1.0
    coef_y[exps.index((0, 1))] = 1.0
    qx = rng.uniform(-1.0, 1.0, 3)
    qy = rng.uniform(-1.0, 1.0, 3)
    if cfg.coefficient_scale > 0.0:
        c = size / 2.0
        axis = np.linspace(-c, c, 33)
        grid = np.stack(np.meshgrid(axis, axis), -1).reshape(-1, 2)
        basis = np.stack([grid[:, 0] ** 2, grid[:, 0] * grid[:, 1], grid[:, 1] ** 2], axis=1)
        peak = np.hypot(basis @ qx, basis @ qy).max()
        factor = cfg.coefficient_scale / peak if peak > 0 else 0.0
        # expand q((u, v) - c) into the raw monomial basis
        for coeffs, q in ((coef_x, qx * factor), (coef_y, qy * factor)):
            centered = np.zeros(6)
            centered[[exps.index(e) for e in ((2, 0), (1, 1), (0, 2))]] = q
            coeffs += rebase_coefficients(centered, 2, c, 1.0, c, 1.0)
    return Transform(Polynomial2D(2, coef_x, coef_y))


# ---------------------------------------------------------------------------
# Vessel-tree rendering
# ---------------------------------------------------------------------------

def _rotate(d: np.ndarray, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([c * d[0] - s * d[1], s * d[0] + c * d[1]])


def _draw_segment(img: np.ndarray, p0: np.ndarray, p1: np.ndarray, width: float) -> None:
    """Stamp an anti-aliased thick segment: 1-px intensity ramp at the edge."""
    size = img.shape[0]
    pad = width / 2.0 + 1.5
    x_lo = max(int(np.floor(min(p0[0], p1[0]) - pad)), 0)
    x_hi = min(int(np.ceil(max(p0[0], p1[0]) + pad)) + 1, size)
    y_lo = max(int(np.floor(min(p0[1], p1[1]) - pad)), 0)
    y_hi = min(int(np.ceil(max(p0[1], p1[1]) + pad)) + 1, size)
    if x_lo >= x_hi or y_lo >= y_hi:
        return
    ys, xs = np.mgrid[y_lo:y_hi, x_lo:x_hi]
    delta = p1 - p0
    length_sq = float(delta @ delta)
    if length_sq == 0.0:
        dist = np.hypot(xs - p0[0], ys - p0[1])
    else:
        t = ((xs - p0[0]) * delta[0] + (ys - p0[1]) * delta[1]) / length_sq
        t = np.clip(t, 0.0, 1.0)
        dist = np.hypot(xs - (p0[0] + t * delta[0]), ys - (p0[1] + t * delta[1]))
    intensity = np.clip(width / 2.0 + 0.5 - dist, 0.0, 1.0)
    np.maximum(img[y_lo:y_hi, x_lo:x_hi], intensity, out=img[y_lo:y_hi, x_lo:x_hi])


def render_vessel_tree(rng: np.random.Generator, size: int,
                       trunk_width: float = 5.5, max_depth: int = 6) -> np.ndarray:
    """Random branching polylines with widths tapering toward the leaves.

    Two trees enter from different borders; their arcades cross each
    other, supplying both bifurcations and crossovers.
    """
    img = np.zeros((size, size))
    margin = 0.04 * size

    def in_bounds(p):
        return margin <= p[0] <= size - margin and margin <= p[1] <= size - margin

    def grow(start, heading, width):
        stack = [(start, heading, width, 0)]
        while stack:
            pos, d, width, depth = stack.pop()
            if width < 1.2 or depth > max_depth:
                continue
            for _ in range(int(rng.integers(2, 4))):
                step = rng.uniform(0.05, 0.11) * size
                end = pos + d * step
                _draw_segment(img, pos, end, width)
                pos = end
                d = _rotate(d, rng.uniform(-0.35, 0.35))
                if not in_bounds(pos):
                    break
            if not in_bounds(pos):
                continue
            for sign in (1.0, -1.0):
                child = _rotate(d, sign * rng.uniform(0.45, 0.95))
                stack.append((pos.copy(), child, width - rng.uniform(0.5, 0.9), depth + 1))

    grow(np.array([0.10 * size, rng.uniform(0.35, 0.65) * size]),
         _rotate(np.array([1.0, 0.0]), rng.uniform(-0.4, 0.4)),
         trunk_width)
    grow(np.array([rng.uniform(0.35, 0.65) * size, 0.92 * size]),
         _rotate(np.array([0.0, -1.0]), rng.uniform(-0.4, 0.4)),
         trunk_width - 1.0)
    return img


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------

GT_POOL_SIZE = 50


def _landmark_points(source_img: np.ndarray, n_points: int,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(fitting points, held-out points), both on the vascular tree.

    The strongest skeleton junctions feed the fitting set, padded with
    random skeleton pixels when junctions run short; the next-strongest
    junctions (again padded from the skeleton) form a disjoint held-out
    pool used as exact evaluation ground truth. Keeping both sets on the
    tree mirrors manual annotation, which can only mark vessel landmarks,
    and keeps evaluation inside the hull the fit actually saw.
    """
    size = source_img.shape[0]
    skeleton = skeletonize(binarize(source_img, 0.5))
    kps = detect_junctions(skeleton, nms_radius=5.0)
    kps.sort(key=lambda k: (k.y, k.x))
    pool = [(k.x, k.y) for k in kps]

    ys, xs = np.nonzero(skeleton.grid)
    wanted = n_points + GT_POOL_SIZE
    if len(pool) < wanted and len(ys):
        extra = min(wanted - len(pool), len(ys))
        picks = rng.choice(len(ys), size=extra, replace=False)
        pool.extend((float(xs[i]), float(ys[i])) for i in picks)
    while len(pool) < wanted:  # essentially unreachable: blank skeleton
        pool.append(tuple(rng.uniform(0.2 * size, 0.8 * size, 2)))

    # Seeded shuffle before splitting: fitting and held-out landmarks must
    # be interleaved draws from the same spatial distribution, otherwise
    # evaluation turns into extrapolation outside the fitted hull.
    pool = np.asarray(pool, dtype=np.float64)[rng.permutation(len(pool))]
    return pool[:n_points], pool[n_points:wanted]


def make_problem(cfg: SynthConfig) -> SynthProblem:
    """Full synthetic pair: images, planted transform, noisy correspondences.

    Gaussian correspondence noise is radially truncated at 3 sigma so
    that noisy-but-genuine pairs stay distinguishable from the uniform
    gross outliers, whose indices are recorded in ``outlier_mask``.
    """
    size = cfg.image_size
    gt = plant_transform(cfg)
    source_img = render_vessel_tree(_rng(cfg.seed, 1), size)
    target_img = warp(source_img, invert_on_grid(gt, size, size), size, size)

    rng = _rng(cfg.seed, 2)
    src_pts, held_out = _landmark_points(source_img, cfg.n_points, rng)
    tgt_pts = gt.apply(src_pts)

    if cfg.noise_sigma > 0.0:
        noise = rng.normal(0.0, cfg.noise_sigma, tgt_pts.shape)
        norms = np.hypot(noise[:, 0], noise[:, 1])
        cap = 3.0 * cfg.noise_sigma
        over = norms > cap
        noise[over] *= (cap / norms[over])[:, None]
        tgt_pts = tgt_pts + noise

    outlier_mask = np.zeros(cfg.n_points, dtype=bool)
    n_outliers = int(np.floor(cfg.outlier_fraction * cfg.n_points))
    if n_outliers:
        chosen = rng.choice(cfg.n_points, size=n_outliers, replace=False)
        outlier_mask[chosen] = True
        tgt_pts[chosen] = rng.uniform(0.0, size, (n_outliers, 2))

    gt_points = CorrespondenceSet(held_out, gt.apply(held_out))
    return SynthProblem(source_img, target_img, gt,
                        CorrespondenceSet(src_pts, tgt_pts), outlier_mask,
                        gt_points, cfg)


def gt_grid_correspondences(gt: Transform, size: int, n_side: int = 7,
                            inset: float = 0.2) -> CorrespondenceSet:
    """Exact held-out evaluation grid over the shared central field of view.

    Ground-truth points live where source and cropped target genuinely
    overlap, mirroring how manual correspondence annotations are placed.
    """
    axis = np.linspace(inset * size, (1.0 - inset) * size, n_side)
    grid = np.stack(np.meshgrid(axis, axis), -1).reshape(-1, 2)
    return CorrespondenceSet(grid, gt.apply(grid))


def synthetic_rois(size: int) -> tuple[RoiBox, RoiBox]:
    """Landmark boxes consistent with the rendered geometry: a central
    macula and an optic disc offset to the right, giving a crop that
    covers the evaluation grid region."""
    c = size / 2.0
    m_half = 0.05 * size
    od_cx, od_cy, od_half = c + 0.30 * size, c, 0.06 * size
    macula = RoiBox("macula", c - m_half, c - m_half, c + m_half, c + m_half)
    od = RoiBox("optic_disc", od_cx - od_half, od_cy - od_half,
                od_cx + od_half, od_cy + od_half)
    return macula, od


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def export_problem(problem: SynthProblem, out_dir, gt_inset: float = 0.2) -> dict:
    """Write one problem directory; returns its manifest entry.

    Layout: source.png, target.png, gt_transform.json, gt_points.json
    (exact held-out landmark correspondences), correspondences.json (the
    noisy fitting set), rois.json, config.json. ``gt_inset`` restricts
    the ground-truth points to the central shared field of view, which
    is where annotations can exist for crop-style pairs; pass 0 to keep
    the full frame.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = problem.config
    size = problem.source_img.shape[0]

    save_image(out_dir / "source.png", problem.source_img)
    save_image(out_dir / "target.png", np.clip(problem.target_img, 0.0, 1.0))
    save_transform(out_dir / "gt_transform.json", problem.gt_transform)
    problem.correspondences.save(out_dir / "correspondences.json")

    gt = problem.gt_points
    if gt_inset > 0.0 and gt is not None:
        lo, hi = gt_inset * size, (1.0 - gt_inset) * size
        keep = ((gt.src >= lo) & (gt.src <= hi)).all(axis=1)
        gt = gt.subset(keep)
    if gt is None or gt.m < 10:  # tree too sparse in the window: exact grid instead
        gt = gt_grid_correspondences(problem.gt_transform, size, inset=max(gt_inset, 0.1))
    gt.save(out_dir / "gt_points.json")

    save_rois(out_dir / "rois.json", *synthetic_rois(size))
    (out_dir / "config.json").write_text(
        json.dumps(cfg.to_json_dict() if cfg else {}, indent=1, sort_keys=True))

    return {"id": out_dir.name,
            "source": str(out_dir / "source.png"),
            "target": str(out_dir / "target.png"),
            "rois": str(out_dir / "rois.json"),
            "gt": str(out_dir / "gt_points.json"),
            "gt_transform": str(out_dir / "gt_transform.json")}


def make_dataset(out_dir, seeds, base_cfg: SynthConfig,
                 use_planted_matches: bool = False,
                 gt_inset: float = 0.2) -> Path:
    """Export one problem per seed plus a manifest.json; returns its path.

    With ``use_planted_matches`` each manifest entry points the pipeline
    at the problem's noisy correspondence file instead of image-based
    keypoint matching (used for fitting-stage studies such as the
    polynomial degree sweep, which also pass ``gt_inset=0`` because no
    cropping restricts where ground truth may live).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for seed in seeds:
        cfg = SynthConfig(seed=seed, image_size=base_cfg.image_size,
                          transform_kind=base_cfg.transform_kind,
                          coefficient_scale=base_cfg.coefficient_scale,
                          noise_sigma=base_cfg.noise_sigma,
                          outlier_fraction=base_cfg.outlier_fraction,
                          n_points=base_cfg.n_points)
        problem = make_problem(cfg)
        pair_name = f"pair_{seed:04d}"
        entry = export_problem(problem, out_dir / pair_name, gt_inset)
        # manifest entries are relative to the manifest so the dataset
        # directory can be moved or mounted elsewhere
        for key in ("source", "target", "rois", "gt", "gt_transform"):
            entry[key] = f"{pair_name}/{Path(entry[key]).name}"
        if use_planted_matches:
            entry["matches"] = f"{pair_name}/correspondences.json"
        entries.append(entry)
    manifest = out_dir / "manifest.json"
    manifest.write_text(json.dumps(entries, indent=1, sort_keys=True))
    return manifest
