"""From a raw grayscale fundus-like image to a vessel map and skeleton.

Renders a synthetic vessel tree, pretends we only have it as a raw
grayscale image, runs the classical vesselness fallback, binarizes,
skeletonizes, and saves every stage as a PNG under demos/output/.
When a trained segmentation model's probability map is available you
would load it with retinareg.load_image and skip the enhancement step.
"""

from pathlib import Path

import numpy as np

from retinareg import binarize, enhance_vesselness, save_image, skeletonize
from retinareg.synth import render_vessel_tree

out = Path(__file__).parent / "output"
out.mkdir(exist_ok=True)

rng = np.random.default_rng(7)
raw = render_vessel_tree(rng, 512) * 0.8 + 0.1  # pretend it's a photo: offset + gain
save_image(out / "01_raw.png", raw)

vessels = enhance_vesselness(raw, scales=[1.0, 2.0, 3.0])
save_image(out / "01_vesselness.png", vessels.grid)
print(f"vesselness response: min={vessels.grid.min():.3f} max={vessels.grid.max():.3f}")

binary = binarize(vessels.grid, 0.5)
skeleton = skeletonize(binary)
save_image(out / "01_binary.png", binary)
save_image(out / "01_skeleton.png", skeleton.grid)

print(f"foreground pixels: {int(binary.sum())} binary -> {int(skeleton.grid.sum())} centerline")
print(f"wrote 4 stages to {out}/01_*.png")
