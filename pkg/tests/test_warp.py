"""Warping against hand-computed bilinear weights and exact round trips."""

import numpy as np
import pytest

from retinareg.fitting import Homography, Polynomial2D, Transform, invert_for_warp
from retinareg.warp import bilinear_sample, render_overlay, warp


def test_identity_warp_is_bit_identical():
    rng = np.random.default_rng(61)
    img = rng.random((12, 17))
    out = warp(img, Transform(Homography.identity()), 17, 12)
    assert np.array_equal(out, img)


def test_translation_moves_delta():
    img = np.zeros((20, 20))
    img[8, 6] = 1.0
    # output pixel (x, y) samples source at (x - 10, y - 5): delta lands at (16, 13)
    inverse = Transform(Homography.translation(-10, -5))
    out = warp(img, inverse, 20, 20)
    assert out[13, 16] == 1.0
    assert out.sum() == 1.0


def test_bilinear_weights_on_checkerboard():
    board = np.array([[0.0, 1.0], [1.0, 0.0]])
    # 2x upscale: output (x, y) samples source at (x/2, y/2)
    inverse = Transform(Homography(np.diag([0.5, 0.5, 1.0])))
    out = warp(board, inverse, 4, 4)
    # hand-computed bilinear values at half-integer probes
    assert out[0, 0] == 0.0
    assert out[0, 1] == pytest.approx(0.5)   # (0.5, 0): 0*(1-.5) + 1*.5
    assert out[1, 1] == pytest.approx(0.5)   # (0.5, 0.5): mean of 0,1,1,0
    assert out[1, 0] == pytest.approx(0.5)   # (0, 0.5)
    assert out[2, 2] == 0.0                  # (1, 1) exact pixel


def test_integer_coordinates_equal_pixel_values():
    rng = np.random.default_rng(62)
    img = rng.random((9, 11))
    ys, xs = np.mgrid[0:9, 0:11]
    sampled = bilinear_sample(img, xs.astype(float), ys.astype(float))
    assert np.array_equal(sampled, img)


def test_out_of_bounds_samples_are_zero():
    img = np.ones((5, 5))
    x = np.array([-0.1, 2.0, 4.5, 10.0])
    y = np.array([2.0, -3.0, 2.0, 2.0])
    assert np.array_equal(bilinear_sample(img, x, y), [0.0, 0.0, 0.0, 1.0 * 0])


def test_translation_round_trip_recovers_interior():
    rng = np.random.default_rng(63)
    img = rng.random((30, 30))
    fwd_inv = Transform(Homography.translation(-7, -4))    # inverse of +7,+4
    back_inv = Transform(Homography.translation(7, 4))
    there = warp(img, fwd_inv, 30, 30)
    back = warp(there, back_inv, 30, 30)
    assert np.max(np.abs(back[1:-5, 1:-8] - img[1:-5, 1:-8])) < 1e-6


def test_degenerate_pixels_zeroed_and_counted():
    # w = 1 - y/10 vanishes along output row y = 10
    h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -0.1, 1.0]])
    stats = {}
    out = warp(np.ones((40, 40)), Transform(Homography(h)), 20, 20, stats=stats)
    assert stats["degenerate_pixels"] == 20
    assert np.all(out[10] == 0.0)


def test_polynomial_inverse_drives_warp():
    rng = np.random.default_rng(64)
    img = np.zeros((60, 60))
    img[25:35, 25:35] = 1.0
    fwd = Transform(Polynomial2D.identity(2), offset=(5.0, 3.0))
    src = rng.uniform(0, 59, (40, 2))
    from retinareg.keypoints import CorrespondenceSet
    inv = invert_for_warp(fwd, CorrespondenceSet(src, fwd.apply(src)), n=2)
    out = warp(img, inv, 60, 60)
    assert out[28 + 3, 28 + 5] > 0.99  # block moved by the offset


# ---------------------------------------------------------------------------
# render_overlay
# ---------------------------------------------------------------------------

def test_overlay_identical_inputs_are_yellow():
    v = np.zeros((8, 8))
    v[3, 2:6] = 1.0
    rgb = render_overlay(v, v)
    assert np.array_equal(rgb[..., 0], v)
    assert np.array_equal(rgb[..., 1], v)
    assert np.all(rgb[..., 2] == 0.0)


def test_overlay_zero_source_pure_green():
    tgt = np.zeros((6, 6))
    tgt[2, 2] = 1.0
    rgb = render_overlay(np.zeros((6, 6)), tgt)
    assert np.all(rgb[..., 0] == 0.0)
    assert np.array_equal(rgb[..., 1], tgt)


def test_overlay_disjoint_masks_never_mix():
    a = np.zeros((6, 6))
    b = np.zeros((6, 6))
    a[1, 1] = 1.0
    b[4, 4] = 1.0
    rgb = render_overlay(a, b)
    both = (rgb[..., 0] > 0.5) & (rgb[..., 1] > 0.5)
    assert not both.any()


def test_overlay_swap_symmetry():
    rng = np.random.default_rng(65)
    a, b = rng.random((5, 5)), rng.random((5, 5))
    ab = render_overlay(a, b)
    ba = render_overlay(b, a)
    assert np.array_equal(ab[..., 0], ba[..., 1])
    assert np.array_equal(ab[..., 1], ba[..., 0])


def test_overlay_dimension_mismatch():
    with pytest.raises(ValueError):
        render_overlay(np.zeros((4, 4)), np.zeros((5, 5)))
