"""Regular-grid containers and the sampling, warping and reduction primitives.

Arrays are indexed ``values[i0, i1, (i2)]``; vector fields carry their
components on a trailing axis, component ``k`` being the displacement along
array axis ``k`` in voxel units. Containers store float32 so that files
written in the 32-bit RAWJ format reload bit-exactly; arithmetic inside the
operations is carried out in float64.

Out-of-bounds sampling clamps to the boundary voxel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

VELOCITY = "velocity"
DISPLACEMENT = "displacement"
ROLES = (VELOCITY, DISPLACEMENT)


class GeometryError(ValueError):
    """Raised when two grid objects do not share a geometry."""


class RoleError(ValueError):
    """Raised when a vector field carries the wrong role tag."""


@dataclass(frozen=True)
class GridGeom:
    dims: tuple[int, ...]
    spacing: tuple[float, ...] | None = None
    origin: tuple[float, ...] | None = None

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        ndim = len(dims)
        if ndim not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got {ndim} axes")
        if any(n < 2 for n in dims):
            raise ValueError(f"every dimension must be >= 2, got {dims}")
        spacing = (1.0,) * ndim if self.spacing is None else tuple(float(s) for s in self.spacing)
        origin = (0.0,) * ndim if self.origin is None else tuple(float(o) for o in self.origin)
        if len(spacing) != ndim or len(origin) != ndim:
            raise ValueError("dims, spacing and origin must have the same length")
        if any(not s > 0 for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScalarImage:
    geom: GridGeom
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float32)
        if vals.shape != self.geom.dims:
            raise GeometryError(f"values shape {vals.shape} does not match dims {self.geom.dims}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("image values must be finite")
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def from_array(cls, values, spacing=None, origin=None) -> "ScalarImage":
        values = np.asarray(values)
        return cls(GridGeom(values.shape, spacing, origin), values)


@dataclass(frozen=True, eq=False)
class VectorField:
    geom: GridGeom
    vectors: np.ndarray
    role: str = VELOCITY

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=np.float32)
        expected = self.geom.dims + (self.geom.ndim,)
        if vecs.shape != expected:
            raise GeometryError(f"vectors shape {vecs.shape} does not match {expected}")
        if not np.all(np.isfinite(vecs)):
            raise ValueError("vector components must be finite")
        if self.role not in ROLES:
            raise RoleError(f"unknown role {self.role!r}")
        object.__setattr__(self, "vectors", _frozen(vecs))

    @classmethod
    def zeros(cls, geom: GridGeom, role: str = VELOCITY) -> "VectorField":
        return cls(geom, np.zeros(geom.dims + (geom.ndim,)), role)

    def scaled(self, s: float) -> "VectorField":
        return VectorField(self.geom, self.vectors.astype(np.float64) * s, self.role)


@dataclass(frozen=True, eq=False)
class Mask:
    geom: GridGeom
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=bool)
        if vals.shape != self.geom.dims:
            raise GeometryError(f"mask shape {vals.shape} does not match dims {self.geom.dims}")
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def full(cls, geom: GridGeom) -> "Mask":
        return cls(geom, np.ones(geom.dims, dtype=bool))

    @property
    def count(self) -> int:
        return int(self.values.sum())


def check_same_geom(*objs) -> GridGeom:
    geom = objs[0].geom
    for other in objs[1:]:
        if other.geom.dims != geom.dims:
            raise GeometryError(f"geometry mismatch: {geom.dims} vs {other.geom.dims}")
    return geom


def _require_role(fld: VectorField, role: str, name: str = "field"):
    if fld.role != role:
        raise RoleError(f"{name} must have role {role!r}, got {fld.role!r}")


# ---------------------------------------------------------------------------
# array-level kernels (float64, component-last vector arrays)

def identity_grid(dims: Sequence[int]) -> np.ndarray:
    """Voxel coordinates, shape ``(d, *dims)``."""
    return np.indices(dims, dtype=np.float64)


def sample(arr: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Multilinear sampling of ``arr`` at ``coords`` (shape ``(d, ...)``), clamped."""
    return ndimage.map_coordinates(
        np.asarray(arr, dtype=np.float64), coords, order=1, mode="nearest", prefilter=False
    )


def sample_vectors(vecs: np.ndarray, coords: np.ndarray) -> np.ndarray:
    return np.stack([sample(vecs[..., k], coords) for k in range(vecs.shape[-1])], axis=-1)


def displaced_coords(disp: np.ndarray) -> np.ndarray:
    """Coordinates ``x + disp(x)`` with the component axis moved first."""
    return identity_grid(disp.shape[:-1]) + np.moveaxis(disp, -1, 0)


def compose_arrays(outer: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Displacement of ``(id + outer) o (id + inner)``."""
    return inner + sample_vectors(outer, displaced_coords(inner))


def warp_array(arr: np.ndarray, disp: np.ndarray) -> np.ndarray:
    return sample(arr, displaced_coords(disp))


def smooth_array(arr: np.ndarray, sigma: float, vector: bool = False) -> np.ndarray:
    if sigma == 0:
        return np.asarray(arr, dtype=np.float64).copy()
    arr = np.asarray(arr, dtype=np.float64)
    if vector:
        sig = (sigma,) * (arr.ndim - 1) + (0,)
    else:
        sig = sigma
    return ndimage.gaussian_filter(arr, sig, mode="nearest", truncate=4.0)


# ---------------------------------------------------------------------------
# public operations

def _check_point(p, ndim: int) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (ndim,):
        raise ValueError(f"point must have {ndim} coordinates")
    if not np.all(np.isfinite(p)):
        raise ValueError("sampling point must be finite")
    return p


def interp_scalar(img: ScalarImage, p) -> float:
    p = _check_point(p, img.geom.ndim)
    return float(sample(img.values, p.reshape(-1, 1))[0])


def interp_vector(fld: VectorField, p) -> np.ndarray:
    p = _check_point(p, fld.geom.ndim)
    return sample_vectors(fld.vectors, p.reshape(-1, 1))[0]


def warp_image(img: ScalarImage, disp: VectorField) -> ScalarImage:
    """Pull-back ``out(x) = img(x + disp(x))``."""
    check_same_geom(img, disp)
    _require_role(disp, DISPLACEMENT, "disp")
    return ScalarImage(img.geom, warp_array(img.values, disp.vectors))


def compose_disp(outer: VectorField, inner: VectorField) -> VectorField:
    """Displacement of ``phi_outer o phi_inner``."""
    check_same_geom(outer, inner)
    _require_role(outer, DISPLACEMENT, "outer")
    _require_role(inner, DISPLACEMENT, "inner")
    return VectorField(outer.geom, compose_arrays(outer.vectors, inner.vectors), DISPLACEMENT)


def magnitude_map(fld: VectorField) -> ScalarImage:
    v = fld.vectors.astype(np.float64)
    return ScalarImage(fld.geom, np.sqrt(np.sum(v * v, axis=-1)))


def mean_over_mask(img: ScalarImage, mask: Mask) -> float:
    check_same_geom(img, mask)
    if mask.count == 0:
        raise ValueError("mask has no true voxels")
    return float(np.mean(img.values[mask.values], dtype=np.float64))


def foreground_mask(a: ScalarImage, b: ScalarImage, frac: float = 0.01) -> Mask:
    check_same_geom(a, b)
    if not 0 <= frac < 1:
        raise ValueError(f"frac must lie in [0, 1), got {frac}")
    va, vb = a.values, b.values
    m = (va > frac * va.max()) | (vb > frac * vb.max())
    if not m.any():
        raise ValueError("foreground mask is empty (degenerate images)")
    return Mask(a.geom, m)


Smoothable = Union[ScalarImage, VectorField]


def gaussian_smooth(x: Smoothable, sigma: float) -> Smoothable:
    """Separable Gaussian smoothing with clamped borders; ``sigma`` in voxels."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if isinstance(x, VectorField):
        if sigma == 0:
            return x
        return VectorField(x.geom, smooth_array(x.vectors, sigma, vector=True), x.role)
    if sigma == 0:
        return x
    return ScalarImage(x.geom, smooth_array(x.values, sigma))
