"""Source-to-target coordinate transforms and their robust estimation.

Two transform families are supported: a 3x3 projective homography and a
bivariate polynomial of degree n evaluated as

    x = sum_{i+j<=n} a_ij * u^i * v^j
    y = sum_{i+j<=n} b_ij * u^i * v^j.

The homography is fitted by normalized DLT, robustly inside RANSAC; the
polynomial by linear least squares on coordinates normalized to
[-1, 1]^2 (coefficients are mapped back to the raw pixel basis, which
stays the public representation). ``fit_ransac_polynomial`` cascades the
two: RANSAC labels the inliers, the polynomial refines on them,
trading the homography's planar bias for the polynomial's flexibility
without inheriting its sensitivity to outliers.

Degenerate inputs raise (never silently fall back); the pipeline layer
maps the ``FitError`` family to a failed registration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .keypoints import CorrespondenceSet

_W_EPSILON = 1e-12  # homogeneous coordinates below this are degenerate


class FitError(Exception):
    """Base class for estimation failures that mean 'no transform'."""


class InsufficientDataError(FitError):
    """Fewer correspondences than the model's minimal sample."""


class DegeneracyError(FitError):
    """Rank-deficient or non-invertible configuration."""


class NoConsensusError(FitError):
    """RANSAC found no consensus set of at least minimal-sample size."""


# ---------------------------------------------------------------------------
# Transform types
# ---------------------------------------------------------------------------

def n_coefficients(degree: int) -> int:
    """Number of monomials u^i v^j with i + j <= degree."""
    return (degree + 1) * (degree + 2) // 2


def monomial_exponents(degree: int) -> list[tuple[int, int]]:
    """(i, j) exponent pairs in ascending total degree, u-major within each."""
    return [(i, total - i) for total in range(degree + 1) for i in range(total, -1, -1)]


def _vander2d(u: np.ndarray, v: np.ndarray, degree: int) -> np.ndarray:
    return np.stack([u ** i * v ** j for i, j in monomial_exponents(degree)], axis=1)


@dataclass
class Homography:
    """3x3 projective transform, normalized so h[2][2] == 1 when nonzero."""

    h: np.ndarray

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.float64)
        if self.h.shape != (3, 3) or not np.isfinite(self.h).all():
            raise ValueError(f"h must be a finite 3x3 matrix, got shape {self.h.shape}")
        if abs(self.h[2, 2]) > _W_EPSILON:
            self.h = self.h / self.h[2, 2]
        if abs(np.linalg.det(self.h)) <= _W_EPSILON:
            raise DegeneracyError("homography matrix is singular")

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        projected = pts @ self.h[:, :2].T + self.h[:, 2]
        w = projected[:, 2]
        if np.any(np.abs(w) < _W_EPSILON):
            raise DegeneracyError("point maps to the line at infinity")
        return projected[:, :2] / w[:, None]

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]]))


@dataclass
class Polynomial2D:
    """Bivariate polynomial coordinate map of degree n.

    ``coef_x`` and ``coef_y`` are aligned with ``monomial_exponents(degree)``.
    """

    degree: int
    coef_x: np.ndarray
    coef_y: np.ndarray

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")
        k = n_coefficients(self.degree)
        self.coef_x = np.asarray(self.coef_x, dtype=np.float64).reshape(k)
        self.coef_y = np.asarray(self.coef_y, dtype=np.float64).reshape(k)
        if not (np.isfinite(self.coef_x).all() and np.isfinite(self.coef_y).all()):
            raise ValueError("polynomial coefficients must be finite")

    def apply(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        v = _vander2d(pts[:, 0], pts[:, 1], self.degree)
        return np.stack([v @ self.coef_x, v @ self.coef_y], axis=1)

    def coefficient(self, axis: str, i: int, j: int) -> float:
        idx = monomial_exponents(self.degree).index((i, j))
        return float((self.coef_x if axis == "x" else self.coef_y)[idx])

    @classmethod
    def identity(cls, degree: int) -> "Polynomial2D":
        k = n_coefficients(degree)
        cx, cy = np.zeros(k), np.zeros(k)
        exps = monomial_exponents(degree)
        cx[exps.index((1, 0))] = 1.0
        cy[exps.index((0, 1))] = 1.0
        return cls(degree, cx, cy)


@dataclass
class Transform:
    """A coordinate map: homography or polynomial, plus a final translation.

    The translation (typically a crop-frame origin) is added after the
    model is evaluated, including after the homography's projective
    division.
    """

    model: Homography | Polynomial2D
    offset: tuple[float, float] = (0.0, 0.0)

    def apply(self, pts) -> np.ndarray:
        out = self.model.apply(pts) + np.asarray(self.offset, dtype=np.float64)
        return out


def eval_transform(t: Transform, pt):
    """Map one (x, y) point or an (N, 2) array through ``t``."""
    pt = np.asarray(pt, dtype=np.float64)
    single = pt.ndim == 1
    out = t.apply(pt)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def transform_to_json_dict(t: Transform) -> dict:
    offset = [float(t.offset[0]), float(t.offset[1])]
    if isinstance(t.model, Homography):
        return {"type": "homography", "h": t.model.h.tolist(), "offset": offset}
    if t.model.degree > 9:
        raise ValueError("coefficient keys are single-digit exponent pairs; degree must be <= 9")
    exps = monomial_exponents(t.model.degree)
    return {"type": "polynomial",
            "degree": t.model.degree,
            "a": {f"{i}{j}": float(c) for (i, j), c in zip(exps, t.model.coef_x)},
            "b": {f"{i}{j}": float(c) for (i, j), c in zip(exps, t.model.coef_y)},
            "offset": offset}


def transform_from_json_dict(doc: dict) -> Transform:
    offset = tuple(float(c) for c in doc.get("offset", (0.0, 0.0)))
    if doc["type"] == "homography":
        return Transform(Homography(np.asarray(doc["h"], dtype=np.float64)), offset)
    if doc["type"] == "polynomial":
        degree = int(doc["degree"])
        exps = monomial_exponents(degree)
        coef_x = np.array([doc["a"].get(f"{i}{j}", 0.0) for i, j in exps])
        coef_y = np.array([doc["b"].get(f"{i}{j}", 0.0) for i, j in exps])
        return Transform(Polynomial2D(degree, coef_x, coef_y), offset)
    raise ValueError(f"unknown transform type {doc.get('type')!r}")


def save_transform(path, t: Transform) -> None:
    Path(path).write_text(json.dumps(transform_to_json_dict(t), indent=1, sort_keys=True))


def load_transform(path) -> Transform:
    return transform_from_json_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Homography estimation
# ---------------------------------------------------------------------------

def _hartley_normalize(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Translate to the centroid and scale mean distance to sqrt(2)."""
    centroid = pts.mean(axis=0)
    spread = np.hypot(*(pts - centroid).T).mean()
    scale = math.sqrt(2.0) / spread if spread > _W_EPSILON else 1.0
    T = np.array([[scale, 0.0, -scale * centroid[0]],
                  [0.0, scale, -scale * centroid[1]],
                  [0.0, 0.0, 1.0]])
    return (pts - centroid) * scale, T


def fit_homography_dlt(P: CorrespondenceSet) -> Homography:
    """Normalized direct linear transform; exact on noiseless projective data."""
    if P.m < 4:
        raise InsufficientDataError(f"homography needs >= 4 correspondences, got {P.m}")
    src, t_src = _hartley_normalize(P.src)
    tgt, t_tgt = _hartley_normalize(P.tgt)

    a = np.zeros((2 * P.m, 9))
    x, y = src[:, 0], src[:, 1]
    xp, yp = tgt[:, 0], tgt[:, 1]
    a[0::2, 0], a[0::2, 1], a[0::2, 2] = -x, -y, -1.0
    a[0::2, 6], a[0::2, 7], a[0::2, 8] = x * xp, y * xp, xp
    a[1::2, 3], a[1::2, 4], a[1::2, 5] = -x, -y, -1.0
    a[1::2, 6], a[1::2, 7], a[1::2, 8] = x * yp, y * yp, yp

    _, singular, vt = np.linalg.svd(a)
    if singular[7] <= max(a.shape) * np.finfo(float).eps * singular[0]:
        raise DegeneracyError("design matrix rank-deficient (degenerate point configuration)")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_tgt) @ h_norm @ t_src
    return Homography(h)


@dataclass
class RansacConfig:
    """Knobs of the robust homography stage; defaults sized for 1000-px frames."""

    reproj_threshold: float = 10.0
    max_iterations: int = 2000
    confidence: float = 0.999
    seed: int = 42

    def __post_init__(self):
        if self.reproj_threshold <= 0:
            raise ValueError(f"reproj_threshold must be > 0, got {self.reproj_threshold}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence must be in (0, 1), got {self.confidence}")


def ransac_homography(P: CorrespondenceSet,
                      cfg: RansacConfig = RansacConfig()) -> tuple[Homography, np.ndarray]:
    """Robust homography by 4-point-sample RANSAC with confidence early exit.

    Returns the homography refitted on the largest consensus set and the
    boolean inlier mask of that set. Deterministic for a fixed seed.
    """
    if P.m < 4:
        raise InsufficientDataError(f"RANSAC needs >= 4 correspondences, got {P.m}")
    rng = np.random.default_rng(cfg.seed)

    best_mask = None
    best_count = 0
    needed = cfg.max_iterations
    iteration = 0
    while iteration < min(needed, cfg.max_iterations):
        iteration += 1
        sample = rng.choice(P.m, size=4, replace=False)
        try:
            candidate = fit_homography_dlt(P.subset(sample))
            projected = candidate.apply(P.src)
        except FitError:
            continue
        errors = np.hypot(*(projected - P.tgt).T)
        mask = errors <= cfg.reproj_threshold
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask = count, mask
            inlier_ratio = count / P.m
            if inlier_ratio >= 1.0:
                break
            surviving = 1.0 - inlier_ratio ** 4
            if surviving <= 0.0:
                break
            needed = math.ceil(math.log(1.0 - cfg.confidence) / math.log(surviving))

    if best_mask is None or best_count < 4:
        raise NoConsensusError(f"no consensus of size >= 4 among {P.m} correspondences")
    return fit_homography_dlt(P.subset(best_mask)), best_mask


# ---------------------------------------------------------------------------
# Polynomial estimation
# ---------------------------------------------------------------------------

def _axis_normalization(values: np.ndarray) -> tuple[float, float]:
    """(center, scale) mapping the value range onto [-1, 1]."""
    lo, hi = values.min(), values.max()
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    return center, (1.0 / half if half > _W_EPSILON else 1.0)


def rebase_coefficients(coeffs: np.ndarray, degree: int,
                        cu: float, su: float, cv: float, sv: float) -> np.ndarray:
    """Coefficients over (su*(u-cu), sv*(v-cv)) -> coefficients over (u, v).

    Exact basis change by binomial expansion; used to publish raw-pixel
    coefficients after fitting in normalized coordinates, and to plant
    center-anchored deviation fields.
    """
    exps = monomial_exponents(degree)
    position = {e: idx for idx, e in enumerate(exps)}
    raw = np.zeros_like(coeffs)
    for (i, j), c in zip(exps, coeffs):
        if c == 0.0:
            continue
        for k in range(i + 1):
            uk = math.comb(i, k) * su ** i * (-cu) ** (i - k)
            for l in range(j + 1):
                vl = math.comb(j, l) * sv ** j * (-cv) ** (j - l)
                raw[position[(k, l)]] += c * uk * vl
    return raw


def fit_polynomial(P: CorrespondenceSet, n: int) -> Polynomial2D:
    """Least-squares degree-n polynomial map from the correspondence set.

    Each output axis is an independent linear solve on the monomial
    basis. Source coordinates are normalized to [-1, 1]^2 for
    conditioning; returned coefficients are in the raw pixel basis.
    """
    if n < 1:
        raise ValueError(f"degree must be >= 1, got {n}")
    k = n_coefficients(n)
    if P.m < k:
        raise InsufficientDataError(f"degree {n} needs >= {k} correspondences, got {P.m}")

    u, v = P.src[:, 0], P.src[:, 1]
    cu, su = _axis_normalization(u)
    cv, sv = _axis_normalization(v)
    design = _vander2d(su * (u - cu), sv * (v - cv), n)

    solution, _, rank, _ = np.linalg.lstsq(design, P.tgt, rcond=None)
    if rank < k:
        raise DegeneracyError(f"design matrix rank {rank} < {k} (points lack 2-D spread)")

    return Polynomial2D(n,
                        rebase_coefficients(solution[:, 0], n, cu, su, cv, sv),
                        rebase_coefficients(solution[:, 1], n, cu, su, cv, sv))


def fit_ransac_polynomial(P: CorrespondenceSet,
                          cfg: RansacConfig = RansacConfig(),
                          n: int = 2) -> tuple[Polynomial2D, np.ndarray]:
    """Double fit: RANSAC homography flags inliers, polynomial refits on them.

    The default degree is 2; quadratic strikes the best accuracy /
    overfitting balance on fundus geometry.
    """
    _, inlier_mask = ransac_homography(P, cfg)
    inliers = P.subset(inlier_mask)
    if inliers.m < n_coefficients(n):
        raise InsufficientDataError(
            f"only {inliers.m} inliers for degree {n} ({n_coefficients(n)} needed)")
    return fit_polynomial(inliers, n), inlier_mask


def invert_for_warp(t: Transform, P_inliers: CorrespondenceSet | None = None,
                    n: int = 2) -> Transform:
    """Target-to-source transform for image resampling.

    A homography (with its trailing translation folded in) inverts in
    closed form. A polynomial has no closed-form inverse, so a fresh
    polynomial is fitted with roles swapped on ``P_inliers``, which must
    be source-to-target pairs expressed in the frame ``t`` maps into
    (offset included).
    """
    if isinstance(t.model, Homography):
        shift = Homography.translation(*t.offset)
        total = shift.h @ t.model.h
        if abs(np.linalg.det(total)) <= _W_EPSILON:
            raise DegeneracyError("homography is not invertible")
        return Transform(Homography(np.linalg.inv(total)))
    if P_inliers is None:
        raise InsufficientDataError("polynomial inversion needs inlier correspondences")
    return Transform(fit_polynomial(CorrespondenceSet(P_inliers.tgt, P_inliers.src), n))


def invert_on_grid(t: Transform, width: float, height: float, n: int = 3,
                   n_side: int = 15) -> Transform:
    """Approximate inverse fitted on a dense grid over the source extent.

    Homographies invert exactly; polynomials get a reverse fit one
    degree up (a quadratic's inverse is not quadratic), which keeps the
    residual well under a tenth of a pixel for mild warps. Useful when
    no inlier set is at hand, e.g. when warping from a saved transform.
    """
    if isinstance(t.model, Homography):
        return invert_for_warp(t)
    xs = np.linspace(0.0, width, n_side)
    ys = np.linspace(0.0, height, n_side)
    grid = np.stack(np.meshgrid(xs, ys), -1).reshape(-1, 2)
    return invert_for_warp(t, CorrespondenceSet(grid, t.apply(grid)), n=n)
