"""Temporal alignment of two series models to a common anchor time."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import GeometryError, VectorField, VELOCITY, warp_image
from .svf import exp_svf
from .tsmodel import FUTURE, PAST, GammaCurve, PathModel, TsModel, degenerate_path, path_from_fields

REFIT_SAMPLES = 11
# Each model is shifted by its own midpoint deformation (same pattern for
# both of its paths), rather than by the other model's future path.
CONVENTION = "own-midpoint-shift"


@dataclass(frozen=True)
class AlignedPair:
    model_i: TsModel
    model_j: TsModel
    m: float
    interval: tuple
    extrapolate: bool = False
    convention: str = CONVENTION

    @property
    def shape_i(self):
        return self.model_i.shape

    @property
    def shape_j(self):
        return self.model_j.shape


def common_interval(model_i: TsModel, model_j: TsModel) -> tuple:
    ta = max(model_i.range[0], model_j.range[0])
    tb = min(model_i.range[1], model_j.range[1])
    if ta > tb:
        raise ValueError(
            f"time ranges {model_i.range} and {model_j.range} do not overlap; "
            "pass an explicit interval to extrapolate"
        )
    return (ta, tb)


def _shift_same_path(path: PathModel, mt: float, g_mid: float, side: str) -> PathModel:
    """Re-anchor the path whose direction produced the shift: gamma -> gamma - gamma(mt)."""
    beyond = [(t, g - g_mid) for t, g in path.gamma.knots if (t > mt if side == FUTURE else t < mt)]
    if not beyond:
        far = mt + 1.0 if side == FUTURE else mt - 1.0
        beyond = [(far, path.gamma(far) - g_mid)]
    knots = tuple(sorted(beyond + [(mt, 0.0)]))
    lo, hi = path.domain
    domain = (mt, max(hi, mt)) if side == FUTURE else (min(lo, mt), mt)
    return replace(path, gamma=GammaCurve(knots, mt), domain=domain)


def _refit_other_path(model: TsModel, mt: float, shift_side: str, c: np.ndarray, g_mid: float) -> PathModel:
    """Rank-1 refit of ``bch(v_other * gamma_other(t), -c)`` over the re-split domain."""
    same = model.path(shift_side)
    other_side = PAST if shift_side == FUTURE else FUTURE
    other = model.path(other_side)
    lo, hi = other.domain
    domain = (min(lo, mt), mt) if other_side == PAST else (mt, max(hi, mt))
    if domain[0] == domain[1]:
        return degenerate_path(model.geom, mt, other_side, domain)
    ts = np.linspace(domain[0], domain[1], REFIT_SAMPLES)
    ts = [float(t) for t in ts if t != mt]
    v_same = same.v.vectors.astype(np.float64)
    fields = []
    for t in ts:
        on_other = t <= model.m if other_side == PAST else t >= model.m
        if on_other:
            fields.append(other.velocity_at(t) - c)
        else:
            fields.append(v_same * (same.gamma(t) - g_mid))
    return path_from_fields(model.geom, fields, ts, mt, other_side, domain)


def shift_model(model: TsModel, mt: float) -> TsModel:
    """Move a model's anchor to ``mt`` along its own path."""
    delta = mt - model.m
    if delta == 0:
        return model
    side = FUTURE if delta > 0 else PAST
    path = model.path(side)
    g_mid = path.gamma(mt)
    c = path.v.vectors.astype(np.float64) * g_mid
    shape = warp_image(model.shape, exp_svf(VectorField(model.geom, c, VELOCITY)))
    same = _shift_same_path(path, mt, g_mid, side)
    other = _refit_other_path(model, mt, side, c, g_mid)
    paths = {side: same, (PAST if side == FUTURE else FUTURE): other}
    t0, tn = model.range
    return replace(
        model,
        shape=shape,
        m=mt,
        path_future=paths[FUTURE],
        path_past=paths[PAST],
        range=(min(t0, mt), max(tn, mt)),
    )


def align_pair(model_i: TsModel, model_j: TsModel, requested_interval=None) -> AlignedPair:
    if model_i.geom.dims != model_j.geom.dims:
        raise GeometryError(f"geometry mismatch: {model_i.geom.dims} vs {model_j.geom.dims}")
    mt = (model_i.m + model_j.m) / 2.0
    if requested_interval is None:
        interval, extrapolate = common_interval(model_i, model_j), False
    else:
        ta, tb = (float(x) for x in requested_interval)
        if ta >= tb:
            raise ValueError(f"interval start must precede end, got {requested_interval}")
        interval, extrapolate = (ta, tb), True
    if not interval[0] <= mt <= interval[1]:
        raise ValueError(f"common shape time {mt} lies outside the analysis interval {interval}")
    return AlignedPair(shift_model(model_i, mt), shift_model(model_j, mt), mt, interval, extrapolate)
