"""Stationary velocity field group operations.

``exp_svf`` uses scaling and squaring; the group product of two SVFs is
approximated at first order by their sum, and velocities are moved between
anatomies by conjugation with the deformation ``exp(V)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .grid import (
    DISPLACEMENT,
    VELOCITY,
    VectorField,
    _require_role,
    check_same_geom,
    compose_arrays,
    displaced_coords,
    sample_vectors,
)

SQUARING_THRESHOLD = 0.5  # max seed displacement in voxels
DET_FLOOR = 1e-8


class TransportMethod(enum.Enum):
    CONJUGATE_PUSHFORWARD = "conjugate-pushforward"


def n_squarings(max_norm: float) -> int:
    if max_norm <= SQUARING_THRESHOLD:
        return 0
    return max(0, math.ceil(math.log2(max_norm / SQUARING_THRESHOLD)))


def exp_array(v: np.ndarray, s: float = 1.0) -> np.ndarray:
    """Displacement of ``exp(s * v)`` for a component-last velocity array."""
    sv = np.asarray(v, dtype=np.float64) * s
    if not np.all(np.isfinite(sv)):
        raise ValueError("velocity field must be finite")
    max_norm = float(np.sqrt(np.max(np.sum(sv * sv, axis=-1)))) if sv.size else 0.0
    n = n_squarings(max_norm)
    seed = sv / 2.0**n
    # midpoint step for the seed flow: second order, exact for constant fields
    disp = sample_vectors(seed, displaced_coords(0.5 * seed)) if n or max_norm else seed
    for _ in range(n):
        disp = compose_arrays(disp, disp)
    return disp


def exp_svf(v: VectorField, s: float = 1.0) -> VectorField:
    _require_role(v, VELOCITY, "v")
    if not math.isfinite(s):
        raise ValueError("scale must be finite")
    return VectorField(v.geom, exp_array(v.vectors, s), DISPLACEMENT)


def invert_svf(v: VectorField) -> VectorField:
    return exp_svf(v, -1.0)


def jacobian_array(disp: np.ndarray) -> np.ndarray:
    """Per-voxel Jacobian of ``id + disp``, shape ``(*dims, d, d)``.

    ``J[..., i, j] = delta_ij + d disp_i / d x_j``; central differences
    inside, one-sided at the border.
    """
    disp = np.asarray(disp, dtype=np.float64)
    ndim = disp.shape[-1]
    jac = np.empty(disp.shape[:-1] + (ndim, ndim))
    for i in range(ndim):
        grads = np.gradient(disp[..., i], edge_order=1)
        for j in range(ndim):
            jac[..., i, j] = grads[j]
    jac += np.eye(ndim)
    return jac


def jacobian(disp: VectorField) -> np.ndarray:
    _require_role(disp, DISPLACEMENT, "disp")
    return jacobian_array(disp.vectors)


def jacobian_determinant(disp: VectorField) -> np.ndarray:
    return np.linalg.det(jacobian(disp))


@dataclass(frozen=True)
class TransportResult:
    field: VectorField
    fallback_count: int


def transport_array(u: np.ndarray, vs: np.ndarray) -> tuple[np.ndarray, int]:
    """Pull ``u`` back through ``phi = exp(vs)``: ``Dphi(x)^-1 u(phi(x))``."""
    if not np.any(vs):
        return np.asarray(u, dtype=np.float64).copy(), 0
    phi = exp_array(vs)
    jac = jacobian_array(phi)
    moved = sample_vectors(u, displaced_coords(phi))
    det = np.linalg.det(jac)
    bad = np.abs(det) < DET_FLOOR
    out = moved.copy()
    good = ~bad
    out[good] = np.linalg.solve(jac[good], moved[good][..., None])[..., 0]
    return out, int(bad.sum())


def parallel_transport_report(
    u: VectorField,
    vs: VectorField,
    method: TransportMethod = TransportMethod.CONJUGATE_PUSHFORWARD,
) -> TransportResult:
    check_same_geom(u, vs)
    _require_role(u, VELOCITY, "u")
    _require_role(vs, VELOCITY, "V_S")
    if method is TransportMethod.CONJUGATE_PUSHFORWARD:
        arr, n_bad = transport_array(u.vectors, vs.vectors)
    else:  # pragma: no cover - exhaustive over the enum
        raise ValueError(f"unsupported transport method {method}")
    return TransportResult(VectorField(u.geom, arr, VELOCITY), n_bad)


def parallel_transport(
    u: VectorField,
    vs: VectorField,
    method: TransportMethod = TransportMethod.CONJUGATE_PUSHFORWARD,
) -> VectorField:
    """Express ``u`` (defined on the moving anatomy of ``vs``) on the fixed anatomy."""
    return parallel_transport_report(u, vs, method).field


def bch_combine(a: VectorField, b: VectorField) -> VectorField:
    """First-order BCH: ``exp(a) o exp(b) ~ exp(a + b)``."""
    check_same_geom(a, b)
    _require_role(a, VELOCITY, "a")
    _require_role(b, VELOCITY, "b")
    return VectorField(a.geom, a.vectors.astype(np.float64) + b.vectors, VELOCITY)
