"""The macula-centered crop, step by step.

Given macula and optic-disc boxes in the wide-field target frame, the
crop is a square centered on the macula whose side is twice the
distance to the farthest optic-disc corner, translated (and only as a
last resort shrunk) to fit the image. Coordinates round-trip between
the crop frame and the full frame through a pure translation.
"""

import numpy as np

from retinareg import RoiBox, compute_crop, lift_to_full, lower_to_crop

macula = RoiBox("macula", 480, 480, 520, 520)
od = RoiBox("optic_disc", 700, 450, 800, 550)

center = macula.center
distances = np.hypot(*(od.corners - np.asarray(center)).T)
print(f"macula center {center}, OD corner distances {np.round(distances, 2)}")
print(f"side = round(2 * {distances.max():.2f}) = {round(2 * distances.max())}")

frame = compute_crop(macula, od, 1000, 1000)
print(f"crop frame: origin={frame.origin} side={frame.side}")

clamped = compute_crop(macula, od, 600, 600)
print(f"same boxes in a 600x600 image clamp to origin={clamped.origin} side={clamped.side}")

alt = compute_crop(macula, od, 1000, 1000, radius_mode="along_axis")
print(f"along-axis reading instead of farthest corner: side={alt.side}")

pt_crop = (10.0, 20.0)
pt_full = lift_to_full(pt_crop, frame)
print(f"crop-frame point {pt_crop} lives at {tuple(map(float, pt_full))} in the "
      f"full frame; round-trip gives {tuple(map(float, lower_to_crop(pt_full, frame)))}")
