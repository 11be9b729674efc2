"""Shepp-Logan phantom, smooth random velocity fields and the three
comparison sets (shape-only, path-only, both)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridGeom, ScalarImage, VectorField, VELOCITY, smooth_array, warp_array
from .svf import exp_array

# Modified Shepp-Logan (Toft) with intensities in [0, 1]:
# (intensity, semi-axis x, semi-axis y, centre x, centre y, angle deg)
ELLIPSES_2D = (
    (1.0, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.8, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.1, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.1, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.1, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.1, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)

# 3D analogue: same in-plane layout plus z semi-axis and z centre.
ELLIPSOIDS_Z = (
    (0.810, 0.00),
    (0.780, 0.00),
    (0.220, 0.00),
    (0.280, 0.00),
    (0.410, -0.15),
    (0.050, 0.25),
    (0.050, 0.25),
    (0.050, 0.00),
    (0.020, 0.00),
    (0.020, 0.00),
)

BORDER = 3  # voxels kept free of synthetic deformation


def _centres(n: int) -> np.ndarray:
    return (2.0 * np.arange(n) + 1.0) / n - 1.0


def shepp_logan(dims) -> ScalarImage:
    """Rasterized phantom; axis 0 runs along y (top to bottom), axis 1 along x."""
    dims = tuple(int(n) for n in dims)
    if len(dims) == 2:
        y = -_centres(dims[0])[:, None]
        x = _centres(dims[1])[None, :]
        z = None
    elif len(dims) == 3:
        y = -_centres(dims[0])[:, None, None]
        x = _centres(dims[1])[None, :, None]
        z = _centres(dims[2])[None, None, :]
    else:
        raise ValueError("phantom dims must be 2D or 3D")

    img = np.zeros(dims)
    for k, (amp, a, b, x0, y0, deg) in enumerate(ELLIPSES_2D):
        th = np.deg2rad(deg)
        c, s = np.cos(th), np.sin(th)
        xr = (x - x0) * c + (y - y0) * s
        yr = -(x - x0) * s + (y - y0) * c
        r = (xr / a) ** 2 + (yr / b) ** 2
        if z is not None:
            cz, z0 = ELLIPSOIDS_Z[k]
            r = r + ((z - z0) / cz) ** 2
        img += amp * (r <= 1.0)
    return ScalarImage(GridGeom(dims), np.clip(img, 0.0, 1.0))


@dataclass(frozen=True)
class SimConfig:
    dims: tuple = (128, 128)
    n_frames: int = 7
    shape_amp: float = 3.0
    path_amp: float = 3.0
    sigma: float = 8.0
    seed: int = 42

    def __post_init__(self):
        if self.shape_amp < 0 or self.path_amp < 0:
            raise ValueError("amplitudes must be non-negative")
        if self.n_frames < 3:
            raise ValueError("n_frames must be >= 3")
        object.__setattr__(self, "dims", tuple(int(n) for n in self.dims))


def _border_window(dims, sigma: float) -> np.ndarray:
    """0 within BORDER voxels of the edge, smooth ramp to 1 over ``sigma`` voxels."""
    win = np.ones(dims)
    for ax, n in enumerate(dims):
        i = np.arange(n, dtype=np.float64)
        dist = np.minimum(i, n - 1 - i)
        t = np.clip((dist - BORDER + 1) / max(sigma, 1.0), 0.0, 1.0)
        w = t * t * (3.0 - 2.0 * t)
        shape = [1] * len(dims)
        shape[ax] = n
        win = win * w.reshape(shape)
    return win


def synth_svf(config: SimConfig, amp: float, seed: int) -> VectorField:
    """Smooth random velocity with max magnitude ``amp``, zero near the border."""
    if amp < 0:
        raise ValueError("amp must be non-negative")
    dims = config.dims
    geom = GridGeom(dims)
    if amp == 0:
        return VectorField.zeros(geom)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(dims + (len(dims),))
    v = smooth_array(noise, config.sigma, vector=True)
    v *= _border_window(dims, config.sigma)[..., None]
    mag = np.sqrt(np.sum(v * v, axis=-1))
    v *= amp / mag.max()
    return VectorField(geom, v, VELOCITY)


@dataclass
class SimSet:
    frames_i: list
    times_i: list
    frames_j: list
    times_j: list
    generators: dict = field(default_factory=dict)


def sim_gammas(n: int) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n)


def _series(base: np.ndarray, v_path: np.ndarray, gammas, geom) -> list:
    return [ScalarImage(geom, warp_array(base, exp_array(v_path, g))) for g in gammas]


def build_sim_set(set_id: int, config: SimConfig | None = None) -> SimSet:
    """Construct one of the three TS pairs.

    1: same path on two anatomies related by the shape field.
    2: same anatomy, mutually inverse paths.
    3: both of the above.
    """
    config = config or SimConfig()
    if set_id not in (1, 2, 3):
        raise ValueError(f"set_id must be 1, 2 or 3, got {set_id}")
    phantom = shepp_logan(config.dims)
    geom = phantom.geom
    v_shape = synth_svf(config, config.shape_amp, config.seed)
    v_path = synth_svf(config, config.path_amp, config.seed + 1)
    gammas = sim_gammas(config.n_frames)
    base_a = phantom.values.astype(np.float64)
    base_b = warp_array(base_a, exp_array(v_shape.vectors))

    vp = v_path.vectors
    if set_id == 1:
        fi = _series(base_a, vp, gammas, geom)
        fj = _series(base_b, vp, gammas, geom)
    elif set_id == 2:
        fi = _series(base_a, vp, gammas, geom)
        fj = _series(base_a, vp, -gammas, geom)
    else:
        fi = _series(base_a, vp, gammas, geom)
        fj = _series(base_b, vp, -gammas, geom)
    times = [float(k) for k in range(config.n_frames)]
    gens = {"v_shape": v_shape, "v_path": v_path, "gammas": gammas, "phantom": phantom}
    return SimSet(fi, list(times), fj, list(times), gens)
