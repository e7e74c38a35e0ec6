"""Why the double fit: RANSAC alone, polynomial alone, and the cascade.

Fifty correspondences from a planted quadratic warp, ten of them
replaced by gross outliers. The homography-only fit is robust but
biased (it cannot bend); the plain quadratic fit bends but chases the
outliers; RANSAC-then-quadratic keeps the best of both. Errors are
median Euclidean error (MEE) on a clean held-out grid.
"""

import numpy as np

from retinareg import (
    CorrespondenceSet,
    RansacConfig,
    fit_polynomial,
    fit_ransac_polynomial,
    ransac_homography,
)
from retinareg.synth import SynthConfig, plant_transform

gt = plant_transform(SynthConfig(seed=42, image_size=1000,
                                 transform_kind="quadratic",
                                 coefficient_scale=8.0))
rng = np.random.default_rng(42)
src = rng.uniform(0, 1000, (50, 2))
tgt = gt.apply(src)
outliers = rng.choice(50, size=10, replace=False)
tgt[outliers] = rng.uniform(0, 1000, (10, 2))
P = CorrespondenceSet(src, tgt)

axis = np.linspace(100, 900, 7)
grid = np.stack(np.meshgrid(axis, axis), -1).reshape(-1, 2)
truth = gt.apply(grid)


def mee(model):
    return float(np.median(np.hypot(*(model.apply(grid) - truth).T)))


homography, mask = ransac_homography(P, RansacConfig(seed=0))
plain = fit_polynomial(P, 2)
cascade, cascade_mask = fit_ransac_polynomial(P, RansacConfig(seed=0), 2)

print(f"planted outliers: {len(outliers)}/50; "
      f"RANSAC kept {int(mask.sum())} correspondences")
print(f"{'strategy':<22} MEE on clean held-out grid")
print(f"{'homography (RANSAC)':<22} {mee(homography):10.4g} px   <- reliable, planar bias")
print(f"{'quadratic, no RANSAC':<22} {mee(plain):10.4g} px   <- dragged by outliers")
print(f"{'RANSAC -> quadratic':<22} {mee(cascade):10.4g} px   <- the double fit")
