import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfulm.geometry import ArrayGeometry, RfLabel, apex_points, in_aperture_mask
from rfulm.transform import (AffineMap, CalibrationSet, FitError, LMOptions, apply_affine,
                             default_region, fit_affine_lm, fit_affine_normal, fit_per_angle,
                             gen_calibration_points, sum_squared_residual)

LAM = 1540.0 / 15.625e6
A_TRUE = np.array([2.0, 0.0, 3.0, 0.0, 0.5, -1.0])


@pytest.fixture(scope="module")
def g():
    return ArrayGeometry.linear(32, LAM / 2, num_samples=128, start_offset=4 * LAM)


@pytest.fixture(scope="module")
def region(g):
    return default_region(g, 4.0, 14.0)


def synthetic(a, n=200, seed=0):
    rng = np.random.default_rng(seed)
    rf = np.column_stack([rng.uniform(0, 31, n), rng.uniform(0, 127, n)])
    return CalibrationSet(AffineMap.from_coefficients(a).apply(rf), rf, seed)


def test_apply_affine_example():
    m = AffineMap.from_coefficients(A_TRUE)
    p = apply_affine(m, RfLabel(1.0, 4.0))
    assert (p.lateral, p.axial) == (5.0, 1.0)


def test_identity_map_leaves_points():
    pts = np.array([[1.5, 2.0], [-3.0, 7.25]])
    np.testing.assert_array_equal(AffineMap().apply(pts), pts)


def test_homogeneous_row():
    m = AffineMap.from_coefficients(np.arange(6.0))
    assert m.matrix[2].tolist() == [0.0, 0.0, 1.0]
    v = m.matrix @ np.array([3.0, 4.0, 1.0])
    assert v[2] == 1.0


def test_identity_pairs_give_identity():
    c = synthetic([1, 0, 0, 0, 1, 0])
    for fit in (fit_affine_normal, fit_affine_lm):
        np.testing.assert_allclose(fit(c).coefficients, [1, 0, 0, 0, 1, 0], atol=1e-9)


def test_recovers_known_map():
    c = synthetic(A_TRUE, seed=5)
    np.testing.assert_allclose(fit_affine_normal(c).coefficients, A_TRUE, atol=1e-9)
    np.testing.assert_allclose(fit_affine_lm(c).coefficients, A_TRUE, atol=1e-9)


def test_lm_residual_matches_closed_form(g, region):
    c = gen_calibration_points(g, region, 1000, seed=11)
    a = fit_affine_normal(c)
    b = fit_affine_lm(c)
    assert b.fit_residual_rms == pytest.approx(a.fit_residual_rms, rel=1e-8)
    np.testing.assert_allclose(b.coefficients, a.coefficients, rtol=0,
                               atol=1e-8 * (1 + np.abs(a.coefficients).max()))


def test_calibration_determinism_and_aperture(g, region):
    a = gen_calibration_points(g, region, 100, seed=7)
    b = gen_calibration_points(g, region, 100, seed=7)
    np.testing.assert_array_equal(a.bmode, b.bmode)
    np.testing.assert_array_equal(a.rf, b.rf)
    c = gen_calibration_points(g, region, 500, seed=1)
    assert len(c) == 500
    assert in_aperture_mask(c.rf, g).all()
    np.testing.assert_allclose(apex_points(c.bmode, g), c.rf)


def test_calibration_outside_aperture_raises(g):
    with pytest.raises(FitError):
        gen_calibration_points(g, ((40.0, 50.0), (4.0, 10.0)), 50, seed=0)
    with pytest.raises(ValueError):
        gen_calibration_points(g, ((-1.0, 1.0), (4.0, 10.0)), 10, seed=0)


def test_collinear_points_rejected():
    rf = np.column_stack([np.arange(60.0), 2 * np.arange(60.0)])
    c = CalibrationSet(rf.copy(), rf, 0)
    with pytest.raises(FitError):
        fit_affine_normal(c)
    with pytest.raises(FitError):
        fit_affine_lm(c)


def test_non_convergence_reports_last_iterate():
    c = synthetic(A_TRUE, seed=2)
    with pytest.raises(FitError) as info:
        fit_affine_lm(c, opts=LMOptions(max_iter=1))
    assert info.value.coefficients is not None
    assert info.value.residual is not None


def test_closed_form_is_optimal(g, region):
    c = gen_calibration_points(g, region, 300, seed=4)
    m = fit_affine_normal(c)
    best = sum_squared_residual(m.coefficients, c)
    rng = np.random.default_rng(0)
    for _ in range(50):
        pert = m.coefficients + rng.choice([-1e-3, 1e-3], 6) * (rng.random(6) < 0.5)
        assert sum_squared_residual(pert, c) >= best
    for i in range(6):
        for d in (-1e-3, 1e-3):
            a = m.coefficients.copy()
            a[i] += d
            assert sum_squared_residual(a, c) >= best


def test_per_angle_maps(g, region):
    angles = [math.radians(a) for a in (-5, 0, 5)]
    maps = fit_per_angle(g, angles, region, 1000, 0)
    assert len(maps) == 3
    assert [m.tx_angle for m in maps] == angles
    a13 = [m.a13 for m in maps]
    assert len({round(v, 6) for v in a13}) == 3
    again = fit_per_angle(g, angles, region, 1000, 0)
    for m, n in zip(maps, again):
        np.testing.assert_array_equal(m.coefficients, n.coefficients)
    assert len(fit_per_angle(g, [0.0], region, 200, 0)) == 1
    for m in maps:
        assert abs(m.det) > 1e-12


def test_per_angle_error_names_angle(g):
    with pytest.raises(FitError, match="angle 5 deg"):
        fit_per_angle(g, [math.radians(5)], ((40.0, 50.0), (4.0, 10.0)), 50, 0)


def test_round_trip_within_gate(g, region):
    m = fit_per_angle(g, [0.0], region, 1000, 0)[0]
    (y0, y1), (z0, z1) = region
    cy, cz, hy, hz = (y0 + y1) / 2, (z0 + z1) / 2, 0.4 * (y1 - y0), 0.4 * (z1 - z0)
    held = gen_calibration_points(g, ((cy - hy, cy + hy), (cz - hz, cz + hz)), 500, seed=99)
    err = np.linalg.norm(m.apply(held.rf) - held.bmode, axis=1)
    assert np.median(err) < 0.25


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6), st.integers(0, 10_000))
def test_lm_agrees_with_closed_form(a, seed):
    a = np.array(a)
    if abs(a[0] * a[4] - a[1] * a[3]) < 1e-3:
        a[0] += 1.0
        a[4] += 1.0
    c = synthetic(a, n=80, seed=seed)
    rng = np.random.default_rng(seed)
    noisy = CalibrationSet(c.bmode + rng.normal(0, 0.1, c.bmode.shape), c.rf, seed)
    ref = fit_affine_normal(noisy).coefficients
    got = fit_affine_lm(noisy).coefficients
    assert np.all(np.abs(got - ref) <= 1e-8 * (1 + np.abs(ref)))
