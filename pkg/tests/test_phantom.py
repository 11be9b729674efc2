import math

import numpy as np
import pytest

from shapepath.grid import magnitude_map, warp_array
from shapepath.phantom import BORDER, ELLIPSES_2D, SimConfig, build_sim_set, shepp_logan, synth_svf
from shapepath.svf import exp_array, jacobian_array

SMALL = SimConfig(dims=(64, 64))


def raster_oracle(n):
    """Point-in-ellipse rasterization written independently of the package."""
    c = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    x, y = np.meshgrid(c, -c)
    img = np.zeros((n, n))
    for amp, a, b, x0, y0, deg in ELLIPSES_2D:
        th = math.radians(deg)
        xr = (x - x0) * math.cos(th) + (y - y0) * math.sin(th)
        yr = -(x - x0) * math.sin(th) + (y - y0) * math.cos(th)
        img += amp * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    return np.clip(img, 0.0, 1.0)


def test_phantom_center_and_corner():
    p = shepp_logan((128, 128)).values
    assert p[64, 64] > 0
    assert p[0, 0] == 0 and p[-1, -1] == 0
    assert p.min() >= 0 and p.max() <= 1


def test_phantom_bright_area_matches_fine_raster():
    coarse = (shepp_logan((128, 128)).values > 0).mean()
    fine = (raster_oracle(512) > 0).mean()
    assert abs(coarse - fine) <= 0.1 * fine
    # the bright set is the skull ring plus interior, minus the two dark ellipses
    a = ELLIPSES_2D
    analytic = math.pi * (a[0][1] * a[0][2] - a[2][1] * a[2][2] - a[3][1] * a[3][2]) / 4.0
    assert abs(coarse - analytic) <= 0.1 * analytic


def test_phantom_matches_oracle_at_same_resolution():
    np.testing.assert_allclose(shepp_logan((64, 64)).values, raster_oracle(64), atol=1e-6)


def test_phantom_3d():
    p = shepp_logan((24, 24, 24)).values
    assert p.shape == (24, 24, 24)
    assert p[12, 12, 12] > 0 and p[0, 0, 0] == 0
    with pytest.raises(ValueError):
        shepp_logan((8,))


def test_synth_svf_zero_amp():
    assert not np.any(synth_svf(SMALL, 0.0, 1).vectors)


def test_synth_svf_deterministic():
    a = synth_svf(SMALL, 3.0, 9).vectors
    b = synth_svf(SMALL, 3.0, 9).vectors
    np.testing.assert_array_equal(a, b)
    assert np.any(a != synth_svf(SMALL, 3.0, 10).vectors)


@pytest.mark.parametrize("amp", [0.5, 3.0])
def test_synth_svf_max_magnitude(amp):
    assert abs(float(magnitude_map(synth_svf(SMALL, amp, 2)).values.max()) - amp) <= 1e-6


def test_synth_svf_border_is_zero():
    v = synth_svf(SMALL, 3.0, 4).vectors
    for sl in (np.s_[:BORDER], np.s_[-BORDER:]):
        assert not np.any(v[sl])
        assert not np.any(v[:, sl])


def test_synth_svf_rejects_negative_amp():
    with pytest.raises(ValueError):
        synth_svf(SMALL, -1.0, 0)


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n_frames=2)
    with pytest.raises(ValueError):
        SimConfig(path_amp=-1.0)


@pytest.mark.parametrize("amp", [1.0, 3.0])
def test_generated_deformations_are_diffeomorphic(amp):
    cfg = SimConfig()
    for seed in (42, 43):
        v = synth_svf(cfg, amp, seed).vectors
        det = np.linalg.det(jacobian_array(exp_array(v)))
        assert det.min() > 0.05


def test_set1_without_shape_is_self_comparison():
    sim = build_sim_set(1, SimConfig(dims=(64, 64), shape_amp=0.0))
    for a, b in zip(sim.frames_i, sim.frames_j):
        np.testing.assert_array_equal(a.values, b.values)


def test_set2_middle_frame_and_reversal():
    sim = build_sim_set(2, SMALL)
    n = SMALL.n_frames
    np.testing.assert_array_equal(sim.frames_i[n // 2].values, sim.frames_j[n // 2].values)
    for k in range(n):
        np.testing.assert_array_equal(sim.frames_i[k].values, sim.frames_j[n - 1 - k].values)


def test_set3_generator_replay():
    s1 = build_sim_set(1, SMALL)
    s3 = build_sim_set(3, SMALL)
    g = s3.generators
    base = g["phantom"].values.astype(np.float64)
    shaped = warp_array(base, exp_array(g["v_shape"].vectors))
    vp = g["v_path"].vectors
    for k, gam in enumerate(g["gammas"]):
        np.testing.assert_array_equal(s3.frames_i[k].values, s1.frames_i[k].values)
        expect = warp_array(shaped, exp_array(vp, -gam))
        np.testing.assert_allclose(s3.frames_j[k].values, expect, atol=1e-6)
        np.testing.assert_array_equal(s3.frames_j[k].values, s1.frames_j[SMALL.n_frames - 1 - k].values)


def test_sets_are_deterministic():
    a = build_sim_set(3, SMALL)
    b = build_sim_set(3, SMALL)
    for x, y in zip(a.frames_i + a.frames_j, b.frames_i + b.frames_j):
        np.testing.assert_array_equal(x.values, y.values)


def test_times_and_gammas():
    sim = build_sim_set(1, SMALL)
    assert sim.times_i == sim.times_j == [float(k) for k in range(7)]
    np.testing.assert_allclose(sim.generators["gammas"], np.linspace(-1, 1, 7))
    with pytest.raises(ValueError):
        build_sim_set(4, SMALL)
