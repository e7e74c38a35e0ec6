"""Crop geometry: worked examples, clamping, and translation invariance."""

import numpy as np
import pytest

from retinareg.crop import (
    CropFrame,
    RoiBox,
    compute_crop,
    extract,
    lift_to_full,
    load_rois,
    lower_to_crop,
    save_rois,
)


def box(label, x0, y0, x1, y1):
    return RoiBox(label, x0, y0, x1, y1)


def point_box(label, x, y, eps=0.2):
    # Smallest usable stand-in for a point landmark; the rounding of
    # side = round(2 * distance) absorbs the epsilon.
    return RoiBox(label, x - eps / 2, y - eps / 2, x + eps / 2, y + eps / 2)


# ---------------------------------------------------------------------------
# compute_crop worked examples
# ---------------------------------------------------------------------------

def test_collinear_point_od():
    macula = point_box("macula", 500, 500)
    od = point_box("optic_disc", 750, 500)
    frame = compute_crop(macula, od, 1000, 1000)
    assert frame.side == 500
    assert frame.origin == (250, 250)
    assert frame.center == (500.0, 500.0)


def test_farthest_corner_example():
    macula = box("macula", 480, 480, 520, 520)
    od = box("optic_disc", 700, 450, 800, 550)
    # farthest OD corner from (500, 500) is (800, 550) (or (800, 450)):
    d = np.hypot(300, 50)
    assert round(2 * d) == 608
    frame = compute_crop(macula, od, 1000, 1000)
    assert frame.side == 608
    assert frame.origin == (196, 196)


def test_shrink_when_side_exceeds_image():
    macula = box("macula", 480, 480, 520, 520)
    od = box("optic_disc", 700, 450, 800, 550)
    frame = compute_crop(macula, od, 600, 600)
    assert frame.side == 600
    assert frame.origin == (0, 0)


def test_along_axis_mode_uses_projection():
    macula = point_box("macula", 500, 500)
    od = box("optic_disc", 700, 450, 800, 550)
    frame = compute_crop(macula, od, 1000, 1000, radius_mode="along_axis")
    # axis is +x; farthest projection is the box's far edge at x = 800
    assert frame.side == 600
    assert frame.origin == (200, 200)


def test_crop_centered_when_unclamped():
    rng = np.random.default_rng(31)
    for _ in range(100):
        cx, cy = rng.uniform(400, 600, 2)
        macula = point_box("macula", cx, cy)
        ox, oy = cx + rng.uniform(30, 150), cy + rng.uniform(-80, 80)
        od = box("optic_disc", ox - 20, oy - 15, ox + 20, oy + 15)
        frame = compute_crop(macula, od, 2000, 2000)
        assert abs(cx - (frame.origin[0] + frame.side / 2)) <= 0.5
        assert abs(cy - (frame.origin[1] + frame.side / 2)) <= 0.5


def test_side_monotone_in_landmark_distance():
    macula = point_box("macula", 500, 500)
    sides = []
    for off in range(50, 400, 25):
        od = box("optic_disc", 500 + off, 480, 540 + off, 520)
        sides.append(compute_crop(macula, od, 5000, 5000).side)
    assert all(a <= b for a, b in zip(sides, sides[1:]))


def test_translation_invariance_preclamp():
    rng = np.random.default_rng(32)
    for _ in range(100):
        cx, cy = rng.uniform(300, 500, 2)
        w = rng.uniform(20, 60)
        ox, oy = cx + rng.uniform(60, 200), cy + rng.uniform(-100, 100)
        dx, dy = rng.integers(1, 200, 2)

        base_m = point_box("macula", cx, cy)
        base_od = box("optic_disc", ox - w, oy - w, ox + w, oy + w)
        moved_m = point_box("macula", cx + dx, cy + dy)
        moved_od = box("optic_disc", ox - w + dx, oy - w + dy, ox + w + dx, oy + w + dy)

        big = 10000  # large enough that clamping never engages
        a = compute_crop(base_m, base_od, big, big)
        b = compute_crop(moved_m, moved_od, big, big)
        assert b.side == a.side
        assert b.origin == (a.origin[0] + dx, a.origin[1] + dy)


def test_crop_argument_errors():
    macula = point_box("macula", 500, 500)
    with pytest.raises(ValueError):
        box("optic_disc", 700, 500, 700, 600)  # zero area
    with pytest.raises(ValueError):
        compute_crop(macula, point_box("optic_disc", 750, 500), 400, 400)  # center outside
    with pytest.raises(ValueError):
        compute_crop(point_box("macula", 500, 500, eps=0.01),
                     point_box("optic_disc", 500, 500, eps=0.01), 1000, 1000)  # d ~ 0
    od = point_box("optic_disc", 750, 500)
    with pytest.raises(ValueError):
        compute_crop(od, macula, 1000, 1000)  # swapped labels


# ---------------------------------------------------------------------------
# extract / coordinate lifting
# ---------------------------------------------------------------------------

def test_extract_full_frame_is_identity():
    rng = np.random.default_rng(33)
    img = rng.random((20, 20))
    frame = CropFrame(center=(10, 10), side=20, origin=(0, 0))
    assert np.array_equal(extract(img, frame), img)


def test_extract_block():
    img = np.arange(16, dtype=np.float64).reshape(4, 4) / 16
    frame = CropFrame(center=(1, 1), side=2, origin=(0, 0))
    assert np.array_equal(extract(img, frame), img[:2, :2])


def test_extract_paste_roundtrip():
    rng = np.random.default_rng(34)
    img = rng.random((30, 30))
    frame = CropFrame(center=(14, 11), side=12, origin=(8, 5))
    sub = extract(img, frame)
    pasted = img.copy()
    pasted[5:17, 8:20] = sub
    assert np.array_equal(pasted, img)


def test_lift_and_lower_are_inverse():
    frame = CropFrame(center=(375, 375), side=250, origin=(250, 250))
    assert tuple(lift_to_full((10, 20), frame)) == (260.0, 270.0)
    identity_frame = CropFrame(center=(5, 5), side=10, origin=(0, 0))
    assert tuple(lift_to_full((3.5, 4.5), identity_frame)) == (3.5, 4.5)

    rng = np.random.default_rng(35)
    pts = rng.uniform(0, 100, (50, 2))
    back = lower_to_crop(lift_to_full(pts, frame), frame)
    assert np.allclose(back, pts)


def test_roi_json_roundtrip(tmp_path):
    macula = box("macula", 480, 480, 520, 520)
    od = box("optic_disc", 700, 450, 800, 550)
    p = tmp_path / "rois.json"
    save_rois(p, macula, od)
    m2, od2 = load_rois(p)
    assert m2 == macula
    assert od2 == od
