"""Fast property suite behind ``shapepath selftest``.

Covers self-distance, the SVF algebra tolerances, rank-1 exactness and
stability of the temporal maximum. Uses a 64x64 phantom to stay quick.
"""

from __future__ import annotations

import sys
import time

import numpy as np

from .alignment import align_pair
from .grid import sample_vectors, identity_grid, compose_arrays
from .metric import path_distance, shape_distance, total_distance
from .phantom import SimConfig, build_sim_set, synth_svf
from .svf import exp_array
from .tsmodel import fit_rank1, fit_ts_model

SMALL = SimConfig(dims=(64, 64))


def rk4_flow(v: np.ndarray, steps: int = 64) -> np.ndarray:
    """Displacement after integrating ``dx/dt = v(x)`` over unit time from every voxel."""
    x = identity_grid(v.shape[:-1])
    x0 = x.copy()
    h = 1.0 / steps

    def f(p):
        return np.moveaxis(sample_vectors(v, p), -1, 0)

    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return np.moveaxis(x - x0, 0, -1)


def _interior(a: np.ndarray, margin: int = 8) -> np.ndarray:
    sl = tuple(slice(margin, n - margin) for n in a.shape[:-1])
    return a[sl]


def _norm(a):
    return np.sqrt(np.sum(a * a, axis=-1))


def check_self_distance():
    sim = build_sim_set(1, SMALL)
    model = fit_ts_model(sim.frames_i, sim.times_i)
    d = total_distance(model, model).total
    return d <= 1e-6, f"D(A,A) = {d:.3g} (<= 1e-6)"


def check_svf_algebra():
    v = synth_svf(SMALL, 4.0, 7).vectors.astype(np.float64)
    exact_zero = not np.any(exp_array(np.zeros_like(v)))
    sub = _norm(_interior(exp_array(v, 1.0) - compose_arrays(exp_array(v, 0.4), exp_array(v, 0.6)))).mean()
    v3 = v * 0.75
    rt = _norm(_interior(compose_arrays(exp_array(v3, 1.0), exp_array(v3, -1.0)))).max()
    rk = _norm(_interior(exp_array(v) - rk4_flow(v))).mean()
    ok = exact_zero and sub <= 0.05 and rt <= 0.1 and rk <= 0.05
    return ok, f"exp(0)=id {exact_zero}; subgroup {sub:.3g} <= 0.05; round trip {rt:.3g} <= 0.1; RK4 {rk:.3g} <= 0.05"


def check_rank1():
    v = synth_svf(SMALL, 2.0, 3).vectors.astype(np.float64)
    g_true = np.array([0.3, 0.7, 1.0])
    fit = fit_rank1([v * g for g in g_true], [1.0, 2.0, 3.0], 0.0)
    err = float(np.max(np.abs(fit.gammas - g_true) / g_true))
    return err <= 1e-6, f"max relative gamma error {err:.3g} (<= 1e-6)"


def check_time_samples():
    sim = build_sim_set(2, SMALL)
    a = fit_ts_model(sim.frames_i, sim.times_i)
    b = fit_ts_model(sim.frames_j, sim.times_j)
    pair = align_pair(a, b)
    vs, _, _, mask = shape_distance(pair)
    _, dp1, _ = path_distance(pair, vs, 101, mask)
    _, dp2, _ = path_distance(pair, vs, 201, mask)
    rel = abs(dp2 - dp1) / dp1
    return rel <= 0.01, f"dp {dp1:.4g} -> {dp2:.4g}, relative change {rel:.3g} (<= 0.01)"


CHECKS = (
    ("self-distance", check_self_distance),
    ("svf-algebra", check_svf_algebra),
    ("rank1-exactness", check_rank1),
    ("temporal-max-stability", check_time_samples),
)


def run_selftest(stream=None) -> bool:
    stream = stream or sys.stdout
    t0 = time.perf_counter()
    all_ok = True
    for name, check in CHECKS:
        ok, detail = check()
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=stream)
    elapsed = time.perf_counter() - t0
    timing_ok = elapsed <= 60.0
    print(f"{'PASS' if timing_ok else 'FAIL'} runtime: {elapsed:.1f}s (<= 60s)", file=stream)
    return all_ok and timing_ok
