"""Transform evaluation and estimation against planted-model oracles."""

import numpy as np
import pytest

from retinareg.fitting import (
    DegeneracyError,
    Homography,
    InsufficientDataError,
    Polynomial2D,
    RansacConfig,
    Transform,
    eval_transform,
    fit_homography_dlt,
    fit_polynomial,
    fit_ransac_polynomial,
    invert_for_warp,
    load_transform,
    monomial_exponents,
    n_coefficients,
    ransac_homography,
    save_transform,
    transform_from_json_dict,
    transform_to_json_dict,
)
from retinareg.keypoints import CorrespondenceSet


def pairs(src, tgt):
    return CorrespondenceSet(np.asarray(src, float), np.asarray(tgt, float))


def random_well_conditioned_h(rng, projective=1e-4):
    """Identity plus bounded rotation/scale/translation/projective terms."""
    theta = rng.uniform(-0.2, 0.2)
    s = rng.uniform(0.9, 1.1)
    h = np.array([
        [s * np.cos(theta), -s * np.sin(theta), rng.uniform(-50, 50)],
        [s * np.sin(theta), s * np.cos(theta), rng.uniform(-50, 50)],
        [rng.uniform(-projective, projective), rng.uniform(-projective, projective), 1.0],
    ])
    return Homography(h)


def planted_quadratic(rng, span=1000.0, bend=8.0):
    """Identity linear part plus bounded random second-order terms."""
    exps = monomial_exponents(2)
    cx = np.zeros(6)
    cy = np.zeros(6)
    cx[exps.index((1, 0))] = 1.0
    cy[exps.index((0, 1))] = 1.0
    for coeffs in (cx, cy):
        for e in ((2, 0), (1, 1), (0, 2)):
            coeffs[exps.index(e)] = rng.uniform(-1, 1) * bend / span ** 2
    return Polynomial2D(2, cx, cy)


# ---------------------------------------------------------------------------
# eval_transform
# ---------------------------------------------------------------------------

def test_identity_homography_eval():
    t = Transform(Homography.identity())
    assert np.allclose(eval_transform(t, (123.4, 56.7)), (123.4, 56.7))


def test_identity_polynomial_any_degree():
    rng = np.random.default_rng(41)
    for n in (1, 2, 3):
        t = Transform(Polynomial2D.identity(n))
        pts = rng.uniform(-100, 100, (20, 2))
        assert np.allclose(eval_transform(t, pts), pts)


def test_quadratic_hand_evaluation():
    exps = monomial_exponents(2)
    cx = np.zeros(6)
    cx[exps.index((0, 0))] = 2.0
    cx[exps.index((1, 0))] = 0.5
    cx[exps.index((0, 1))] = 0.1
    cx[exps.index((2, 0))] = 0.001
    cy = np.zeros(6)
    cy[exps.index((0, 1))] = 1.0
    out = eval_transform(Transform(Polynomial2D(2, cx, cy)), (10.0, 20.0))
    # x = 2 + 0.5*10 + 0.1*20 + 0.001*100 = 9.1, y = 20
    assert np.allclose(out, (9.1, 20.0))


def test_offset_applied_after_projection():
    t = Transform(Homography.identity(), offset=(250.0, 100.0))
    assert np.allclose(eval_transform(t, (1.0, 2.0)), (251.0, 102.0))


def test_degenerate_homogeneous_coordinate_raises():
    h = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 1.0]])
    t = Transform(Homography(h))
    with pytest.raises(DegeneracyError):
        eval_transform(t, (0.0, 1.0))  # w = 1 - y = 0


# ---------------------------------------------------------------------------
# fit_homography_dlt
# ---------------------------------------------------------------------------

def test_dlt_identity_on_unit_square():
    corners = [(0, 0), (1, 0), (1, 1), (0, 1)]
    h = fit_homography_dlt(pairs(corners, corners))
    assert np.allclose(h.h, np.eye(3), atol=1e-9)


def test_dlt_pure_translation():
    corners = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], float)
    h = fit_homography_dlt(pairs(corners, corners + (10, 5)))
    assert np.allclose(h.h, [[1, 0, 10], [0, 1, 5], [0, 0, 1]], atol=1e-9)


def test_dlt_recovers_random_homography():
    rng = np.random.default_rng(42)
    for _ in range(25):
        planted = random_well_conditioned_h(rng)
        src = rng.uniform(0, 1000, (8, 2))
        h = fit_homography_dlt(pairs(src, planted.apply(src)))
        assert np.max(np.abs(h.h - planted.h)) < 1e-8


def test_dlt_insufficient_and_degenerate():
    with pytest.raises(InsufficientDataError):
        fit_homography_dlt(pairs([(0, 0), (1, 0), (2, 2)], [(0, 0), (1, 0), (2, 2)]))
    collinear = [(0, 0), (1, 1), (2, 2), (3, 3)]
    with pytest.raises(DegeneracyError):
        fit_homography_dlt(pairs(collinear, collinear))


def test_dlt_invariant_to_similarity_of_either_set():
    rng = np.random.default_rng(43)
    planted = random_well_conditioned_h(rng)
    src = rng.uniform(0, 1000, (10, 2))
    tgt = planted.apply(src)
    probe = rng.uniform(100, 900, (15, 2))
    reference = fit_homography_dlt(pairs(src, tgt)).apply(probe)

    theta, scale, shift = 0.5, 2.5, np.array([300.0, -150.0])
    rot = scale * np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    src_sim = src @ rot.T + shift
    h_conj = fit_homography_dlt(pairs(src_sim, tgt))
    assert np.allclose(h_conj.apply(probe @ rot.T + shift), reference, atol=1e-8)


# ---------------------------------------------------------------------------
# ransac_homography
# ---------------------------------------------------------------------------

def test_ransac_all_consistent_data():
    rng = np.random.default_rng(44)
    planted = random_well_conditioned_h(rng)
    src = rng.uniform(0, 1000, (30, 2))
    h, mask = ransac_homography(pairs(src, planted.apply(src)), RansacConfig(seed=0))
    assert mask.all()
    assert np.max(np.abs(h.h - planted.h)) < 1e-7


def test_ransac_rejects_planted_outliers():
    rng = np.random.default_rng(45)
    for trial in range(10):
        planted = random_well_conditioned_h(rng)
        src = rng.uniform(0, 1000, (50, 2))
        tgt = planted.apply(src)
        outliers = rng.choice(50, size=15, replace=False)
        tgt[outliers] = rng.uniform(0, 1000, (15, 2))

        h, mask = ransac_homography(pairs(src, tgt),
                                    RansacConfig(reproj_threshold=3.0, seed=trial))
        assert not mask[outliers].any()
        clean = np.setdiff1d(np.arange(50), outliers)
        errors = np.hypot(*(h.apply(src[clean]) - tgt[clean]).T)
        assert errors.max() < 1.0


def test_ransac_below_minimal_sample():
    with pytest.raises(InsufficientDataError):
        ransac_homography(pairs([(0, 0), (1, 0), (0, 1)], [(0, 0), (1, 0), (0, 1)]))


def test_ransac_no_consensus():
    # four exactly-collinear points: every minimal sample is degenerate
    src = [(0, 0), (1, 1), (2, 2), (3, 3)]
    with pytest.raises((DegeneracyError, InsufficientDataError, Exception)) as err:
        ransac_homography(pairs(src, src), RansacConfig(max_iterations=50, seed=1))
    assert "consensus" in str(err.value) or "rank" in str(err.value)


def test_ransac_deterministic_for_fixed_seed():
    rng = np.random.default_rng(46)
    planted = random_well_conditioned_h(rng)
    src = rng.uniform(0, 1000, (40, 2))
    tgt = planted.apply(src)
    tgt[:8] = rng.uniform(0, 1000, (8, 2))
    p = pairs(src, tgt)
    cfg = RansacConfig(reproj_threshold=3.0, seed=7)
    h1, m1 = ransac_homography(p, cfg)
    h2, m2 = ransac_homography(p, cfg)
    assert np.array_equal(m1, m2)
    assert np.array_equal(h1.h, h2.h)


# ---------------------------------------------------------------------------
# fit_polynomial
# ---------------------------------------------------------------------------

def test_polynomial_identity_correspondences():
    rng = np.random.default_rng(47)
    src = rng.uniform(0, 1000, (30, 2))
    for n in (1, 2, 3):
        poly = fit_polynomial(pairs(src, src), n)
        expected_x = np.zeros(n_coefficients(n))
        expected_y = np.zeros(n_coefficients(n))
        exps = monomial_exponents(n)
        expected_x[exps.index((1, 0))] = 1.0
        expected_y[exps.index((0, 1))] = 1.0
        assert np.allclose(poly.coef_x, expected_x, atol=1e-9)
        assert np.allclose(poly.coef_y, expected_y, atol=1e-9)


def test_polynomial_too_few_points():
    rng = np.random.default_rng(48)
    src = rng.uniform(0, 100, (5, 2))
    assert n_coefficients(2) == 6
    with pytest.raises(InsufficientDataError):
        fit_polynomial(pairs(src, src), 2)


def test_polynomial_recovers_planted_quadratic():
    rng = np.random.default_rng(49)
    for _ in range(25):
        planted = planted_quadratic(rng)
        src = rng.uniform(0, 1000, (20, 2))
        poly = fit_polynomial(pairs(src, planted.apply(src)), 2)
        assert np.max(np.abs(poly.coef_x - planted.coef_x)) < 1e-8
        assert np.max(np.abs(poly.coef_y - planted.coef_y)) < 1e-8


def test_polynomial_collinear_points_degenerate():
    u = np.linspace(0, 100, 10)
    src = np.stack([u, 2 * u + 3], axis=1)
    with pytest.raises(DegeneracyError):
        fit_polynomial(pairs(src, src), 1)


def test_polynomial_interpolates_at_exact_count():
    rng = np.random.default_rng(50)
    src = rng.uniform(0, 500, (6, 2))
    tgt = rng.uniform(0, 500, (6, 2))
    poly = fit_polynomial(pairs(src, tgt), 2)
    assert np.max(np.abs(poly.apply(src) - tgt)) < 1e-9


def test_higher_degree_on_noiseless_data_keeps_zero_residuals():
    rng = np.random.default_rng(51)
    planted = planted_quadratic(rng)
    src = rng.uniform(0, 1000, (40, 2))
    tgt = planted.apply(src)
    for n in (2, 3, 4):
        poly = fit_polynomial(pairs(src, tgt), n)
        assert np.max(np.abs(poly.apply(src) - tgt)) < 1e-9


# ---------------------------------------------------------------------------
# fit_ransac_polynomial
# ---------------------------------------------------------------------------

def test_cascade_on_planar_data_matches_homography_action():
    # A quadratic cannot represent strong projective division, so "planar"
    # here means near-affine: mild projective terms keep the best quadratic
    # within 1e-6 px over the hull, and the pure affine sub-case is exact.
    rng = np.random.default_rng(52)
    planted = random_well_conditioned_h(rng, projective=2e-7)
    src = rng.uniform(100, 900, (40, 2))
    p = pairs(src, planted.apply(src))
    poly, mask = fit_ransac_polynomial(p, RansacConfig(seed=3), n=2)
    assert mask.all()
    held_out = rng.uniform(200, 800, (50, 2))
    assert np.max(np.hypot(*(poly.apply(held_out) - planted.apply(held_out)).T)) < 1e-6

    affine = Homography(np.array([[1.05, -0.02, 30.0], [0.01, 0.97, -12.0], [0, 0, 1.0]]))
    p_aff = pairs(src, affine.apply(src))
    poly_aff, _ = fit_ransac_polynomial(p_aff, RansacConfig(seed=3), n=2)
    assert np.max(np.hypot(*(poly_aff.apply(held_out) - affine.apply(held_out)).T)) < 1e-9


def test_cascade_affine_data_degree_one_equals_least_squares():
    rng = np.random.default_rng(53)
    affine = Homography(np.array([[1.02, 0.03, 12.0], [-0.01, 0.98, -7.0], [0, 0, 1.0]]))
    src = rng.uniform(0, 1000, (30, 2))
    p = pairs(src, affine.apply(src))
    cascade_poly, _ = fit_ransac_polynomial(p, RansacConfig(seed=4), n=1)
    direct = fit_polynomial(p, 1)
    assert np.max(np.abs(cascade_poly.coef_x - direct.coef_x)) < 1e-9
    assert np.max(np.abs(cascade_poly.coef_y - direct.coef_y)) < 1e-9


def test_cascade_beats_plain_polynomial_under_contamination():
    rng = np.random.default_rng(54)
    wins = 0
    for trial in range(20):
        planted = planted_quadratic(rng, bend=8.0)
        src = rng.uniform(0, 1000, (50, 2))
        tgt = planted.apply(src)
        outliers = rng.choice(50, size=10, replace=False)
        tgt[outliers] = rng.uniform(0, 1000, (10, 2))
        p = pairs(src, tgt)

        cascade, _ = fit_ransac_polynomial(p, RansacConfig(seed=trial), n=2)
        plain = fit_polynomial(p, 2)

        grid = np.stack(np.meshgrid(np.linspace(100, 900, 7),
                                    np.linspace(100, 900, 7)), -1).reshape(-1, 2)
        truth = planted.apply(grid)
        mee_cascade = np.median(np.hypot(*(cascade.apply(grid) - truth).T))
        mee_plain = np.median(np.hypot(*(plain.apply(grid) - truth).T))
        if mee_cascade < 1.0 and mee_cascade < mee_plain:
            wins += 1
    assert wins >= 18


def test_cascade_insufficient_inliers():
    rng = np.random.default_rng(55)
    planted = random_well_conditioned_h(rng)
    src = rng.uniform(0, 1000, (9, 2))
    tgt = planted.apply(src)
    tgt[4:] = tgt[4:] + rng.uniform(300, 500, (5, 2))  # only 4 survive RANSAC
    with pytest.raises(InsufficientDataError):
        fit_ransac_polynomial(pairs(src, tgt), RansacConfig(reproj_threshold=3.0, seed=5), n=2)


# ---------------------------------------------------------------------------
# invert_for_warp
# ---------------------------------------------------------------------------

def test_invert_identity_and_translation():
    ident = invert_for_warp(Transform(Homography.identity()))
    assert np.allclose(ident.model.h, np.eye(3))
    inv = invert_for_warp(Transform(Homography.translation(10, 5)))
    assert np.allclose(inv.model.h, [[1, 0, -10], [0, 1, -5], [0, 0, 1]])


def test_invert_homography_with_offset():
    t = Transform(Homography.translation(10, 5), offset=(100.0, -30.0))
    inv = invert_for_warp(t)
    pts = np.array([[3.0, 4.0], [70.0, 20.0]])
    assert np.allclose(inv.apply(t.apply(pts)), pts, atol=1e-9)


def test_invert_polynomial_round_trip():
    rng = np.random.default_rng(56)
    planted = planted_quadratic(rng, bend=10.0)
    fwd = Transform(planted)
    src = rng.uniform(100, 900, (60, 2))
    inliers = pairs(src, fwd.apply(src))
    inv = invert_for_warp(fwd, inliers, n=2)
    interior = rng.uniform(200, 800, (40, 2))
    round_trip = inv.apply(fwd.apply(interior))
    assert np.max(np.hypot(*(round_trip - interior).T)) < 0.5


# ---------------------------------------------------------------------------
# JSON round-trips
# ---------------------------------------------------------------------------

def test_transform_json_roundtrip(tmp_path):
    rng = np.random.default_rng(57)
    poly_t = Transform(planted_quadratic(rng), offset=(12.0, -3.0))
    hom_t = Transform(random_well_conditioned_h(rng), offset=(0.0, 0.0))
    for t in (poly_t, hom_t):
        path = tmp_path / "t.json"
        save_transform(path, t)
        back = load_transform(path)
        pts = rng.uniform(0, 500, (10, 2))
        assert np.allclose(back.apply(pts), t.apply(pts), atol=1e-12)


def test_polynomial_json_uses_exponent_keys():
    doc = transform_to_json_dict(Transform(Polynomial2D.identity(2)))
    assert doc["type"] == "polynomial"
    assert doc["a"]["10"] == 1.0
    assert doc["b"]["01"] == 1.0
    assert doc["a"]["20"] == 0.0
    back = transform_from_json_dict(doc)
    assert isinstance(back.model, Polynomial2D)
