"""Continuous two-piece model of an image time series.

A series is represented by an anchor image ``S`` at time ``m`` and two
paths, one towards later and one towards earlier times. Each path is a
direction field ``v`` scaled by a scalar rate curve: the frame at time
``t`` is ``warp_image(S, exp_svf(v, gamma(t)))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .grid import ScalarImage, VectorField, VELOCITY, check_same_geom, warp_image
from .registration import RegParams, register_svf
from .svf import exp_svf

log = logging.getLogger(__name__)

FUTURE = "future"
PAST = "past"
LONGITUDINAL = "longitudinal"
TEMPLATE = "template"

RANK1_ITERS = 10
RANK1_TOL = 1e-6
ZERO_FIELD_TOL = 1e-9


@dataclass(frozen=True)
class GammaCurve:
    """Piecewise-linear rate curve with an anchor ``(m, 0)``.

    Outside the knot span the curve continues along the line through the
    two outermost knots on that side.
    """

    knots: tuple
    anchor: float

    def __post_init__(self):
        knots = tuple((float(t), float(g)) for t, g in self.knots)
        ts = [t for t, _ in knots]
        if len(knots) < 2:
            raise ValueError("a gamma curve needs at least two knots")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("knot times must be strictly increasing")
        if (float(self.anchor), 0.0) not in knots:
            raise ValueError(f"anchor ({self.anchor}, 0) missing from knots")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "anchor", float(self.anchor))

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.knots])

    @property
    def values(self) -> np.ndarray:
        return np.array([g for _, g in self.knots])

    def __call__(self, t: float) -> float:
        return gamma_eval(self, t)

    def is_monotone(self) -> bool:
        """Whether |gamma| grows away from the anchor on both sides."""
        ts, gs = self.times, np.abs(self.values)
        after = gs[ts >= self.anchor]
        before = gs[ts <= self.anchor][::-1]
        return bool(np.all(np.diff(after) >= 0) and np.all(np.diff(before) >= 0))


def gamma_eval(curve: GammaCurve, t: float) -> float:
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("time must be finite")
    ts, gs = curve.times, curve.values
    if t < ts[0]:
        i0, i1 = 0, 1
    elif t > ts[-1]:
        i0, i1 = -2, -1
    else:
        return float(np.interp(t, ts, gs))
    slope = (gs[i1] - gs[i0]) / (ts[i1] - ts[i0])
    return float(gs[i0] + slope * (t - ts[i0]))


@dataclass(frozen=True)
class PathModel:
    v: VectorField
    gamma: GammaCurve
    domain: tuple
    degenerate: bool = False

    def velocity_at(self, t: float) -> np.ndarray:
        return self.v.vectors.astype(np.float64) * self.gamma(t)


@dataclass(frozen=True)
class TsModel:
    shape: ScalarImage
    m: float
    path_future: PathModel
    path_past: PathModel
    range: tuple
    provenance: str = LONGITUDINAL
    times: tuple = ()
    warnings: tuple = ()
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        t0, tn = self.range
        if not t0 <= self.m <= tn:
            raise ValueError(f"shape time {self.m} outside range {self.range}")
        if self.provenance not in (LONGITUDINAL, TEMPLATE):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def geom(self):
        return self.shape.geom

    def path(self, side: str) -> PathModel:
        return self.path_future if side == FUTURE else self.path_past

    def side_of(self, t: float) -> str:
        return FUTURE if t >= self.m else PAST

    def velocity_at(self, t: float) -> np.ndarray:
        return self.path(self.side_of(t)).velocity_at(t)


def _check_series(frames: Sequence[ScalarImage], times: Sequence[float], min_frames: int = 3):
    if len(frames) != len(times):
        raise ValueError("frames and times differ in length")
    if len(frames) < min_frames:
        raise ValueError(f"need at least {min_frames} frames, got {len(frames)}")
    ts = [float(t) for t in times]
    if any(not math.isfinite(t) for t in ts):
        raise ValueError("times must be finite")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("times must be strictly increasing (no duplicates)")
    check_same_geom(*frames)
    return ts


def select_shape(frames, times, mode: str = LONGITUDINAL) -> tuple[ScalarImage, float]:
    ts = _check_series(frames, times)
    if mode == LONGITUDINAL:
        k = len(frames) // 2
        return frames[k], ts[k]
    if mode == TEMPLATE:
        mean = np.mean([f.values.astype(np.float64) for f in frames], axis=0)
        med = float(np.median(ts))
        k = int(np.argmin([abs(t - med) for t in ts]))
        return ScalarImage(frames[0].geom, mean), ts[k]
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class Rank1Fit:
    v: np.ndarray
    gammas: np.ndarray
    degenerate: bool
    iterations: int


def fit_rank1(fields: Sequence[np.ndarray], times: Sequence[float], m: float) -> Rank1Fit:
    """Alternating least squares for ``u_k ~ v * gamma_k``.

    ``gamma`` is normalised to 1 at the time farthest from ``m``.
    """
    us = [np.asarray(u, dtype=np.float64) for u in fields]
    ts = np.asarray(times, dtype=np.float64)
    far = int(np.argmax(np.abs(ts - m)))
    gam = (ts - m) / (ts[far] - m)
    if max(float(np.max(np.abs(u))) for u in us) < ZERO_FIELD_TOL:
        return Rank1Fit(np.zeros_like(us[0]), gam, True, 0)

    it = 0
    for it in range(1, RANK1_ITERS + 1):
        v = sum(g * u for g, u in zip(gam, us)) / float(np.sum(gam * gam))
        vv = float(np.sum(v * v))
        if vv == 0.0:
            return Rank1Fit(np.zeros_like(us[0]), (ts - m) / (ts[far] - m), True, it)
        new = np.array([float(np.sum(u * v)) / vv for u in us])
        delta = float(np.max(np.abs(new - gam)))
        gam = new
        if delta < RANK1_TOL:
            break
    scale = gam[far]
    if scale == 0.0:
        return Rank1Fit(np.zeros_like(us[0]), (ts - m) / (ts[far] - m), True, it)
    return Rank1Fit(v * scale, gam / scale, False, it)


def _curve(m: float, times, gammas) -> GammaCurve:
    knots = sorted([(m, 0.0)] + [(float(t), float(g)) for t, g in zip(times, gammas)])
    return GammaCurve(tuple(knots), m)


def degenerate_path(geom, m: float, side: str, domain=None) -> PathModel:
    far = m + 1.0 if side == FUTURE else m - 1.0
    domain = (m, m) if domain is None else domain
    return PathModel(VectorField.zeros(geom), _curve(m, [far], [1.0]), tuple(domain), True)


def path_from_fields(geom, fields, times, m: float, side: str, domain) -> PathModel:
    fit = fit_rank1(fields, times, m)
    return PathModel(VectorField(geom, fit.v, VELOCITY), _curve(m, times, fit.gammas), tuple(domain), fit.degenerate)


def fit_path(shape: ScalarImage, frames, times, m: float, side: str, reg: RegParams | None = None) -> PathModel:
    """Register ``shape`` onto each frame on one side of ``m`` and fit the rank-1 path."""
    if side not in (FUTURE, PAST):
        raise ValueError(f"unknown side {side!r}")
    ts = [float(t) for t in times]
    if not frames:
        raise ValueError("fit_path needs at least one frame")
    if side == FUTURE and any(t <= m for t in ts) or side == PAST and any(t >= m for t in ts):
        raise ValueError(f"all frames must lie strictly on the {side} side of m={m}")
    check_same_geom(shape, *frames)
    us = [register_svf(fixed=f, moving=shape, params=reg).vectors for f in frames]
    domain = (m, max(ts)) if side == FUTURE else (min(ts), m)
    return path_from_fields(shape.geom, us, ts, m, side, domain)


def fit_ts_model(frames, times, mode: str = LONGITUDINAL, reg: RegParams | None = None) -> TsModel:
    ts = _check_series(frames, times)
    shape, m = select_shape(frames, ts, mode)
    paths = {}
    for side in (FUTURE, PAST):
        idx = [k for k, t in enumerate(ts) if (t > m if side == FUTURE else t < m)]
        if idx:
            paths[side] = fit_path(shape, [frames[k] for k in idx], [ts[k] for k in idx], m, side, reg)
        else:
            paths[side] = degenerate_path(shape.geom, m, side)
    warnings = []
    for side, p in paths.items():
        if p.degenerate:
            warnings.append(f"{side} path degenerate (zero direction field)")
        elif not p.gamma.is_monotone():
            warnings.append(f"{side} path gamma is not monotone")
    return TsModel(
        shape=shape,
        m=m,
        path_future=paths[FUTURE],
        path_past=paths[PAST],
        range=(ts[0], ts[-1]),
        provenance=mode,
        times=tuple(ts),
        warnings=tuple(warnings),
        params={"registration": (reg or RegParams()).to_dict()},
    )


def evaluate(model: TsModel, t: float) -> ScalarImage:
    t = float(t)
    if not math.isfinite(t):
        raise ValueError("time must be finite")
    path = model.path(model.side_of(t))
    return warp_image(model.shape, exp_svf(path.v, path.gamma(t)))


def shift_times(model: TsModel, c: float) -> TsModel:
    """Same model with every stored time shifted by ``c``."""

    def shift_path(p: PathModel) -> PathModel:
        knots = tuple((t + c, g) for t, g in p.gamma.knots)
        return replace(p, gamma=GammaCurve(knots, p.gamma.anchor + c), domain=tuple(d + c for d in p.domain))

    return replace(
        model,
        m=model.m + c,
        path_future=shift_path(model.path_future),
        path_past=shift_path(model.path_past),
        range=tuple(r + c for r in model.range),
        times=tuple(t + c for t in model.times),
    )
