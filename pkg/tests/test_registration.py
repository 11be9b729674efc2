import numpy as np
import pytest

from conftest import norm, smooth_field, textured_image
from shapepath.grid import (
    GeometryError,
    GridGeom,
    Mask,
    ScalarImage,
    VectorField,
    compose_arrays,
    foreground_mask,
    warp_image,
)
from shapepath.registration import RegParams, downsample, mse, register, register_svf, upsample_velocity
from shapepath.svf import exp_array, exp_svf, jacobian_array

DIMS = (128, 128)


@pytest.fixture(scope="module")
def synthetic_pair():
    fixed = textured_image(DIMS, 0)
    v_true = smooth_field(DIMS, 3.0, 21)
    moving = warp_image(fixed, exp_svf(VectorField(fixed.geom, v_true)))
    res = register(fixed, moving)
    return fixed, moving, v_true, res


def test_params_validation():
    with pytest.raises(ValueError):
        RegParams(levels=0)
    with pytest.raises(ValueError):
        RegParams(step_cap=1.5)
    with pytest.raises(ValueError):
        RegParams(sigma_fluid=-1.0)
    with pytest.raises(ValueError):
        RegParams(iters_per_level=0)
    assert RegParams().to_dict()["sigma_fluid"] == 2.0


def test_identical_images_give_zero_velocity():
    im = textured_image((64, 64), 3)
    v = register_svf(im, im)
    assert float(norm(v.vectors).max()) <= 1e-6


def test_synthetic_warp_mse_reduction(synthetic_pair):
    _, _, _, res = synthetic_pair
    assert res.final_mse <= 0.1 * res.initial_mse


def test_synthetic_warp_round_trip(synthetic_pair):
    fixed, moving, v_true, res = synthetic_pair
    mask = foreground_mask(fixed, moving).values
    # warp(moving, exp(V)) ~ fixed with moving = fixed o exp(v_true), so exp(v_true) o exp(V) ~ id
    rt = norm(compose_arrays(exp_array(v_true), exp_array(res.velocity.vectors)))
    assert rt[mask].mean() <= 0.5


def test_synthetic_warp_velocity_recovery(synthetic_pair):
    fixed, moving, v_true, res = synthetic_pair
    mask = foreground_mask(fixed, moving).values
    v = res.velocity.vectors.astype(np.float64)
    rel = np.linalg.norm((v + v_true)[mask]) / np.linalg.norm(v_true[mask])
    assert rel <= 0.3


def test_inverse_consistency(synthetic_pair):
    fixed, moving, _, res = synthetic_pair
    mask = foreground_mask(fixed, moving).values
    back = register_svf(fixed=moving, moving=fixed).vectors.astype(np.float64)
    v = res.velocity.vectors.astype(np.float64)
    assert norm(v + back)[mask].mean() <= 0.2 * norm(v)[mask].mean()


def test_output_is_invertible(synthetic_pair):
    *_, res = synthetic_pair
    det = np.linalg.det(jacobian_array(exp_array(res.velocity.vectors)))
    assert np.all(np.isfinite(res.velocity.vectors))
    assert det.min() > 0


def test_best_so_far_history_is_monotone(synthetic_pair):
    *_, res = synthetic_pair
    # history holds the best-so-far MSE of each finest-level iteration
    assert len(res.history) >= 1
    assert np.all(np.diff(res.history) <= 0)
    assert res.final_mse <= res.initial_mse


def test_deterministic():
    fixed = textured_image((64, 64), 1)
    moving = warp_image(fixed, exp_svf(VectorField(fixed.geom, smooth_field((64, 64), 2.0, 4))))
    a = register_svf(fixed, moving).vectors
    b = register_svf(fixed, moving).vectors
    np.testing.assert_array_equal(a, b)


def test_geometry_mismatch():
    a = ScalarImage(GridGeom((16, 16)), np.zeros((16, 16)))
    b = ScalarImage(GridGeom((16, 18)), np.zeros((16, 18)))
    with pytest.raises(GeometryError):
        register_svf(a, b)


# -- mse -------------------------------------------------------------------


def test_mse_trivial_cases(rng):
    g = GridGeom((8, 8))
    a = ScalarImage(g, rng.random((8, 8)))
    assert mse(a, a) == 0.0
    b = ScalarImage(g, a.values.astype(np.float64) + 0.5)
    assert mse(a, b) == pytest.approx(0.25, rel=1e-6)


def test_mse_scalar_loop_oracle(rng):
    g = GridGeom((9, 7))
    a = ScalarImage(g, rng.random((9, 7)))
    b = ScalarImage(g, rng.random((9, 7)))
    m = rng.random((9, 7)) > 0.3
    total, count = 0.0, 0
    for i in range(9):
        for j in range(7):
            if m[i, j]:
                d = float(a.values[i, j]) - float(b.values[i, j])
                total += d * d
                count += 1
    assert mse(a, b, Mask(g, m)) == pytest.approx(total / count, rel=1e-10)


# -- pyramid helpers -------------------------------------------------------


def test_downsample_box_average():
    a = np.arange(16, dtype=np.float64).reshape(4, 4)
    np.testing.assert_allclose(downsample(a), [[2.5, 4.5], [10.5, 12.5]])


def test_upsample_scales_constant_velocity():
    v = np.zeros((8, 8, 2)) + [1.0, -0.5]
    np.testing.assert_allclose(upsample_velocity(v, (16, 16)), np.zeros((16, 16, 2)) + [2.0, -1.0])
