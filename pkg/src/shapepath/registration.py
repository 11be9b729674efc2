"""Multi-resolution log-demons registration producing a stationary velocity field."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import Mask, ScalarImage, VectorField, VELOCITY, check_same_geom, sample_vectors, smooth_array, warp_array
from .svf import exp_array

log = logging.getLogger(__name__)

DENOM_FLOOR = 1e-6
MIN_LEVEL_SIZE = 8
PATIENCE = 5


@dataclass(frozen=True)
class RegParams:
    levels: int = 3
    iters_per_level: int = 50
    sigma_fluid: float = 2.0
    sigma_diffusion: float = 1.0
    step_cap: float = 0.5
    stop_tol: float = 1e-4

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.iters_per_level < 1:
            raise ValueError("iters_per_level must be >= 1")
        if self.sigma_fluid < 0 or self.sigma_diffusion < 0:
            raise ValueError("sigmas must be non-negative")
        if not 0 < self.step_cap <= 1:
            raise ValueError("step_cap must lie in (0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RegResult:
    velocity: VectorField
    history: list = field(default_factory=list)  # best-so-far MSE per finest-level iteration
    initial_mse: float = 0.0
    final_mse: float = 0.0


def mse(a: ScalarImage, b: ScalarImage, mask: Mask | None = None) -> float:
    check_same_geom(a, b)
    d = a.values.astype(np.float64) - b.values.astype(np.float64)
    if mask is not None:
        check_same_geom(a, mask)
        if mask.count == 0:
            raise ValueError("mask has no true voxels")
        d = d[mask.values]
    return float(np.mean(d * d))


def downsample(arr: np.ndarray) -> np.ndarray:
    """2x box downsampling, edge-replicating odd axes."""
    pad = [(0, n % 2) for n in arr.shape]
    if any(p[1] for p in pad):
        arr = np.pad(arr, pad, mode="edge")
    out = arr
    for ax in range(arr.ndim):
        n = out.shape[ax]
        out = np.add.reduceat(out, np.arange(0, n, 2), axis=ax) / 2.0
    return out


def upsample_velocity(v: np.ndarray, dims) -> np.ndarray:
    """Interpolate a coarse velocity onto a 2x finer grid and rescale to fine voxels."""
    coords = (np.indices(dims, dtype=np.float64) - 0.5) / 2.0
    return 2.0 * sample_vectors(v, coords)


def _pyramid(arr: np.ndarray, levels: int) -> list:
    pyr = [arr]
    for _ in range(levels - 1):
        nxt = downsample(pyr[-1])
        if min(nxt.shape) < MIN_LEVEL_SIZE:
            break
        pyr.append(nxt)
    return pyr[::-1]


def _demons_force(fixed: np.ndarray, warped: np.ndarray) -> np.ndarray:
    diff = fixed - warped
    gf = np.stack(np.gradient(fixed), axis=-1)
    gw = np.stack(np.gradient(warped), axis=-1)
    g = 0.5 * (gf + gw)
    denom = np.sum(g * g, axis=-1) + diff * diff
    denom = np.maximum(denom, DENOM_FLOOR)
    return g * (diff / denom)[..., None]


def _clamp(u: np.ndarray, cap: float) -> np.ndarray:
    mag = np.sqrt(np.sum(u * u, axis=-1))
    scale = np.where(mag > cap, cap / np.maximum(mag, 1e-12), 1.0)
    return u * scale[..., None]


def _mse_arr(a, b) -> float:
    d = a - b
    return float(np.mean(d * d))


def _run_level(fixed, moving, v, params: RegParams, history: list | None):
    best_v = v
    best = _mse_arr(warp_array(moving, exp_array(v)), fixed)
    if history is not None:
        history.append(best)
    stale = 0
    for _ in range(params.iters_per_level):
        warped = warp_array(moving, exp_array(v))
        upd = _demons_force(fixed, warped)
        upd = smooth_array(upd, params.sigma_fluid, vector=True)
        upd = _clamp(upd, params.step_cap)
        v = smooth_array(v + upd, params.sigma_diffusion, vector=True)
        cur = _mse_arr(warp_array(moving, exp_array(v)), fixed)
        if cur < best * (1.0 - params.stop_tol):
            stale = 0
        else:
            stale += 1
        if cur < best:
            best, best_v = cur, v
        if history is not None:
            history.append(best)
        if stale >= PATIENCE or best == 0.0:
            break
    return best_v, best


def register(fixed: ScalarImage, moving: ScalarImage, params: RegParams | None = None) -> RegResult:
    """Estimate ``V`` with ``warp_image(moving, exp_svf(V)) ~ fixed``."""
    params = params or RegParams()
    geom = check_same_geom(fixed, moving)
    f = fixed.values.astype(np.float64)
    m = moving.values.astype(np.float64)
    pf, pm = _pyramid(f, params.levels), _pyramid(m, params.levels)
    v = np.zeros(pf[0].shape + (f.ndim,))
    history: list = []
    for lvl, (fl, ml) in enumerate(zip(pf, pm)):
        if lvl > 0:
            v = upsample_velocity(v, fl.shape)
        finest = lvl == len(pf) - 1
        v, best = _run_level(fl, ml, v, params, history if finest else None)
        log.debug("level %d dims %s mse %.6g", lvl, fl.shape, best)
    initial = _mse_arr(m, f)
    return RegResult(VectorField(geom, v, VELOCITY), history, initial, history[-1])


def register_svf(fixed: ScalarImage, moving: ScalarImage, params: RegParams | None = None) -> VectorField:
    return register(fixed, moving, params).velocity
