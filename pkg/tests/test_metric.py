import numpy as np
import pytest

from shapepath.alignment import align_pair
from shapepath.grid import VectorField, magnitude_map, mean_over_mask
from shapepath.metric import path_distance, sample_times, shape_distance, total_distance
from shapepath.phantom import SimConfig, build_sim_set
from shapepath.tsmodel import FUTURE, PAST, fit_ts_model

SMALL = SimConfig(dims=(64, 64))


@pytest.fixture(scope="module")
def small():
    sims = {k: build_sim_set(k, SMALL) for k in (1, 2)}
    return {
        "a": fit_ts_model(sims[1].frames_i, sims[1].times_i),
        "b": fit_ts_model(sims[1].frames_j, sims[1].times_j),
        "c": fit_ts_model(sims[2].frames_j, sims[2].times_j),
    }


def check_report(r):
    assert r.ds == mean_over_mask(r.ds_map, r.mask)
    assert r.dp == mean_over_mask(r.dp_map, r.mask)
    assert abs(r.total - (r.ds + r.dp)) <= 1e-12
    assert r.ds_map.values.min() >= 0 and r.dp_map.values.min() >= 0
    assert r.total >= 0


def test_self_distance(small):
    r = total_distance(small["a"], small["a"])
    check_report(r)
    assert r.total <= 1e-6
    assert r.ds <= 1e-6 and r.dp <= 1e-6


def test_report_invariants(small):
    r = total_distance(small["a"], small["b"])
    check_report(r)
    assert r.reference == "j"
    assert r.interval == (0.0, 6.0)
    assert r.n_time_samples == 101
    assert r.provenance["alignment_convention"] == "own-midpoint-shift"
    assert r.warnings["transport_fallback_voxels"] == 0
    assert set(r.stats) == {"ds_map", "dp_map"}


def test_identical_shapes_zero_ds(small):
    pair = align_pair(small["a"], small["c"])
    np.testing.assert_array_equal(pair.shape_i.values, pair.shape_j.values)
    _, _, ds, _ = shape_distance(pair)
    assert ds <= 1e-6


def test_reference_flip_within_symmetry(small):
    r_j = total_distance(small["a"], small["b"], reference="j")
    r_i = total_distance(small["a"], small["b"], reference="i")
    assert abs(r_j.total - r_i.total) <= 0.1 * max(r_j.total, r_i.total)
    with pytest.raises(ValueError):
        total_distance(small["a"], small["b"], reference="k")


def test_interval_monotonicity(small):
    pair_full = align_pair(small["a"], small["c"])
    vs, _, _, mask = shape_distance(pair_full)
    narrow = align_pair(small["a"], small["c"], None)
    narrow = type(narrow)(narrow.model_i, narrow.model_j, narrow.m, (1.3, 4.6))
    wide, _, _ = path_distance(pair_full, vs, 101, mask)
    inner, _, _ = path_distance(narrow, vs, 101, mask)
    assert np.all(wide.values >= inner.values)


def test_sampling_refinement(small):
    pair = align_pair(small["a"], small["c"])
    vs, _, _, mask = shape_distance(pair)
    _, dp1, _ = path_distance(pair, vs, 101, mask)
    _, dp2, _ = path_distance(pair, vs, 201, mask)
    assert abs(dp2 - dp1) <= 0.01 * dp1


def test_sample_times_include_knots(small):
    pair = align_pair(small["a"], small["c"])
    ts = sample_times(pair, 7)
    assert ts[0] == 0.0 and ts[-1] == 6.0
    for t in (1.0, 2.0, 3.0, 4.0, 5.0):
        assert t in ts
    assert np.all(np.diff(ts) > 0)


def test_path_distance_argument_checks(small):
    pair = align_pair(small["a"], small["a"])
    zero = VectorField.zeros(pair.model_i.geom)
    with pytest.raises(ValueError):
        path_distance(pair, zero, 1)
    outside = type(pair)(pair.model_i, pair.model_j, pair.m, (-2.0, 6.0))
    with pytest.raises(ValueError, match="extrapolation"):
        path_distance(outside, zero)
    allowed = type(pair)(pair.model_i, pair.model_j, pair.m, (-2.0, 6.0), extrapolate=True)
    assert path_distance(allowed, zero)[1] <= 1e-6


def test_triangle_inequality_spot_check(small):
    a, b, c = small["a"], small["b"], small["c"]
    ab = total_distance(a, b).total
    bc = total_distance(b, c).total
    ac = total_distance(a, c).total
    assert ac <= ab + bc
    assert ab <= ac + bc
    assert bc <= ab + ac


# -- full-size phantom examples --------------------------------------------


def generator_mean(run, name):
    mag = magnitude_map(run.sim.generators[name])
    return mean_over_mask(mag, run.report.mask)


@pytest.mark.slow
@pytest.mark.xfail(
    strict=True,
    reason="registration of the piecewise-constant phantom underestimates tangential motion (ds about 22% low)",
)
def test_set1_ds_matches_generator(default_sets):
    run = default_sets[1]
    ref = generator_mean(run, "v_shape")
    assert abs(run.report.ds - ref) <= 0.2 * ref


@pytest.mark.slow
def test_set1_ds_swap_stable(default_sets):
    run = default_sets[1]
    assert abs(run.report.ds - run.reverse.ds) <= 0.1 * run.report.ds


@pytest.mark.slow
def test_set2_dp_matches_closed_form(default_sets):
    run = default_sets[2]
    # gammas are linspace(-1, 1), so max |gamma_i - gamma_j| * |v| = 2 |v|
    ref = 2.0 * generator_mean(run, "v_path")
    assert abs(run.report.dp - ref) <= 0.2 * ref


@pytest.mark.slow
def test_set2_ds_near_zero(default_sets):
    assert default_sets[2].report.ds <= 1e-6


@pytest.mark.slow
def test_reports_satisfy_invariants(default_sets):
    for run in default_sets.values():
        check_report(run.report)
        check_report(run.reverse)
        for m in (run.model_i, run.model_j):
            for side in (FUTURE, PAST):
                assert not m.path(side).degenerate
