import numpy as np
import pytest

from shapepath.grid import GridGeom, ScalarImage, smooth_array
from shapepath.phantom import SimConfig, shepp_logan, synth_svf

# name -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


def smooth_field(dims, amp, seed, sigma=8.0):
    """Smooth random velocity array with max magnitude ``amp``."""
    return synth_svf(SimConfig(dims=dims, sigma=sigma), amp, seed).vectors.astype(np.float64)


def textured_image(dims=(64, 64), seed=0):
    """Smooth random texture inside the phantom's head, scaled to [0, 1].

    The final blur keeps the head outline resolvable by linear interpolation,
    so that even the exact inverse warp is not limited by edge aliasing.
    """
    rng = np.random.default_rng(seed)
    tex = smooth_array(rng.standard_normal(dims), 3.0)
    head = shepp_logan(dims).values > 0
    img = smooth_array((tex - tex.min()) * head, 1.0)
    return ScalarImage(GridGeom(tuple(dims)), img / img.max())


def interior(a, margin=8, ndim=2):
    """Crop ``margin`` voxels from each side of the first ``ndim`` axes."""
    return a[tuple(slice(margin, n - margin) for n in a.shape[:ndim])]


def norm(a):
    return np.sqrt(np.sum(np.asarray(a, dtype=np.float64) ** 2, axis=-1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}")


class SimRun:
    """Fitted models and both-direction reports for one default simulation set."""

    def __init__(self, set_id, config=None):
        import time

        from shapepath.metric import total_distance
        from shapepath.phantom import build_sim_set
        from shapepath.tsmodel import fit_ts_model

        t0 = time.perf_counter()
        self.sim = build_sim_set(set_id, config)
        self.model_i = fit_ts_model(self.sim.frames_i, self.sim.times_i)
        self.model_j = fit_ts_model(self.sim.frames_j, self.sim.times_j)
        self.report = total_distance(self.model_i, self.model_j)
        self.elapsed = time.perf_counter() - t0
        self.reverse = total_distance(self.model_j, self.model_i)


@pytest.fixture(scope="session")
def default_sets():
    """Sets 1-3 at SimConfig defaults (128x128, 7 frames, seed 42)."""
    return {k: SimRun(k) for k in (1, 2, 3)}
