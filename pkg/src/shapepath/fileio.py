"""Image/field files, model directories, distance reports and heatmaps.

RAWJ is a pair ``X.json`` (header) + ``X.bin`` (little-endian float32,
axis 0 fastest, vector components interleaved per voxel). NIfTI-1
single-file ``.nii`` is supported for float32 scalar volumes.
"""

from __future__ import annotations

import json
import math
import struct
from pathlib import Path

import numpy as np

from .grid import DISPLACEMENT, VELOCITY, GridGeom, ScalarImage, VectorField
from .tsmodel import GammaCurve, PathModel, TsModel

SCHEMA = 1


class FormatError(ValueError):
    """A file exists but its content violates the format or its invariants."""


# ---------------------------------------------------------------------------
# RAWJ

def _rawj_paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".json"), p.with_name(p.name + ".bin")


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_rawj(path, geom: GridGeom, data: np.ndarray, components: int, role: str):
    hdr_path, bin_path = _rawj_paths(path)
    header = {
        "schema": SCHEMA,
        "dims": list(geom.dims),
        "spacing": list(geom.spacing),
        "origin": list(geom.origin),
        "dtype": "f32",
        "order": "axis0-fastest",
        "endian": "little",
        "components": components,
        "role": role,
    }
    if components == 1:
        flat = np.asarray(data).ravel(order="F")
    else:
        flat = np.moveaxis(np.asarray(data), -1, 0).ravel(order="F")
    hdr_path.parent.mkdir(parents=True, exist_ok=True)
    _dump_json(header, hdr_path)
    bin_path.write_bytes(flat.astype("<f4").tobytes())


def _read_rawj(path):
    hdr_path, bin_path = _rawj_paths(path)
    header = json.loads(hdr_path.read_text())
    try:
        dims = tuple(int(n) for n in header["dims"])
        spacing = header.get("spacing")
        origin = header.get("origin")
        comps = int(header["components"])
        role = header["role"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{hdr_path}: malformed RAWJ header ({exc})") from exc
    if header.get("dtype") != "f32":
        raise FormatError(f"{hdr_path}: unsupported dtype {header.get('dtype')!r} (only f32)")
    if header.get("endian", "little") != "little" or header.get("order", "axis0-fastest") != "axis0-fastest":
        raise FormatError(f"{hdr_path}: unsupported byte order or axis order")
    if spacing is not None and len(spacing) != len(dims):
        raise FormatError(f"{hdr_path}: dims and spacing lengths differ")
    payload = bin_path.read_bytes()
    expected = 4 * comps * int(np.prod(dims))
    if len(payload) != expected:
        raise FormatError(f"{bin_path}: payload length mismatch, expected {expected} bytes, got {len(payload)}")
    flat = np.frombuffer(payload, dtype="<f4")
    geom = GridGeom(dims, spacing, origin)
    if comps == 1:
        return geom, flat.reshape(dims, order="F"), role
    if comps != len(dims):
        raise FormatError(f"{hdr_path}: components must be 1 or {len(dims)}, got {comps}")
    return geom, np.moveaxis(flat.reshape((comps,) + dims, order="F"), 0, -1), role


# ---------------------------------------------------------------------------
# NIfTI-1 (single file, float32 only)

NIFTI_HDR_SIZE = 348
NIFTI_VOX_OFFSET = 352
NIFTI_FLOAT32 = 16


def write_nifti(img: ScalarImage, path):
    geom = img.geom
    hdr = bytearray(NIFTI_HDR_SIZE)
    struct.pack_into("<i", hdr, 0, NIFTI_HDR_SIZE)
    dim = [geom.ndim] + list(geom.dims) + [1] * (7 - geom.ndim)
    struct.pack_into("<8h", hdr, 40, *dim)
    struct.pack_into("<hh", hdr, 70, NIFTI_FLOAT32, 32)
    pixdim = [1.0] + list(geom.spacing) + [1.0] * (7 - geom.ndim)
    struct.pack_into("<8f", hdr, 76, *pixdim)
    struct.pack_into("<fff", hdr, 108, float(NIFTI_VOX_OFFSET), 1.0, 0.0)
    struct.pack_into("<B", hdr, 123, 2)  # xyzt_units: mm
    struct.pack_into("<hh", hdr, 252, 0, 1)  # qform_code, sform_code
    sp = list(geom.spacing) + [1.0] * (3 - geom.ndim)
    org = list(geom.origin) + [0.0] * (3 - geom.ndim)
    for row in range(3):
        srow = [0.0, 0.0, 0.0, org[row]]
        srow[row] = sp[row]
        struct.pack_into("<4f", hdr, 280 + 16 * row, *srow)
    hdr[344:348] = b"n+1\x00"
    data = img.values.ravel(order="F").astype("<f4").tobytes()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(bytes(hdr) + b"\x00" * (NIFTI_VOX_OFFSET - NIFTI_HDR_SIZE) + data)


def read_nifti(path) -> ScalarImage:
    raw = Path(path).read_bytes()
    if len(raw) < NIFTI_HDR_SIZE:
        raise FormatError(f"{path}: file shorter than a NIfTI-1 header")
    if raw[344:347] != b"n+1":
        raise FormatError(f"{path}: missing NIfTI-1 single-file magic 'n+1'")
    end = "<" if struct.unpack_from("<i", raw, 0)[0] == NIFTI_HDR_SIZE else ">"
    if struct.unpack_from(end + "i", raw, 0)[0] != NIFTI_HDR_SIZE:
        raise FormatError(f"{path}: bad sizeof_hdr")
    dim = struct.unpack_from(end + "8h", raw, 40)
    datatype, _bitpix = struct.unpack_from(end + "hh", raw, 70)
    if datatype != NIFTI_FLOAT32:
        raise FormatError(f"{path}: unsupported NIfTI datatype {datatype} (only float32)")
    ndim = dim[0]
    if ndim not in (2, 3) and not (ndim == 4 and dim[4] == 1):
        raise FormatError(f"{path}: unsupported dimensionality {ndim}")
    ndim = min(ndim, 3)
    dims = tuple(int(n) for n in dim[1 : ndim + 1])
    pixdim = struct.unpack_from(end + "8f", raw, 76)
    vox_offset = int(struct.unpack_from(end + "f", raw, 108)[0])
    sform_code = struct.unpack_from(end + "h", raw, 254)[0]
    if sform_code > 0:
        origin = [struct.unpack_from(end + "4f", raw, 280 + 16 * r)[3] for r in range(ndim)]
    else:
        origin = list(struct.unpack_from(end + "3f", raw, 268))[:ndim]
    n = int(np.prod(dims))
    payload = raw[vox_offset : vox_offset + 4 * n]
    if len(payload) != 4 * n:
        raise FormatError(f"{path}: payload length mismatch, expected {4 * n} bytes, got {len(payload)}")
    vals = np.frombuffer(payload, dtype=end + "f4").reshape(dims, order="F")
    slope, inter = struct.unpack_from(end + "ff", raw, 112)
    if slope not in (0.0, 1.0) or inter != 0.0:
        vals = vals * slope + inter
    spacing = [abs(p) if p else 1.0 for p in pixdim[1 : ndim + 1]]
    return ScalarImage(GridGeom(dims, spacing, origin), vals)


# ---------------------------------------------------------------------------
# public image/field IO

def _is_nifti(path) -> bool:
    return str(path).endswith(".nii")


def write_image(img: ScalarImage, path):
    if _is_nifti(path):
        write_nifti(img, path)
    else:
        _write_rawj(path, img.geom, img.values, 1, "scalar")


def read_image(path) -> ScalarImage:
    if _is_nifti(path):
        return read_nifti(path)
    geom, data, role = _read_rawj(path)
    if role != "scalar" or data.shape != geom.dims:
        raise FormatError(f"{path}: expected a scalar image, found role {role!r}")
    return ScalarImage(geom, data)


def write_field(fld: VectorField, path):
    if _is_nifti(path):
        raise FormatError("vector fields are stored as RAWJ only")
    _write_rawj(path, fld.geom, fld.vectors, fld.geom.ndim, fld.role)


def read_field(path) -> VectorField:
    geom, data, role = _read_rawj(path)
    if role not in (VELOCITY, DISPLACEMENT) or data.ndim != geom.ndim + 1:
        raise FormatError(f"{path}: expected a vector field, found role {role!r}")
    return VectorField(geom, data, role)


# ---------------------------------------------------------------------------
# model directories

def save_model(model: TsModel, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_image(model.shape, d / "shape")
    paths = {}
    for side in ("future", "past"):
        p = model.path(side)
        write_field(p.v, d / f"v_{side}")
        paths[side] = {
            "velocity": f"v_{side}",
            "gamma": [[t, g] for t, g in p.gamma.knots],
            "anchor": p.gamma.anchor,
            "domain": list(p.domain),
            "degenerate": p.degenerate,
        }
    manifest = {
        "schema": SCHEMA,
        "kind": "ts-model",
        "m": model.m,
        "range": list(model.range),
        "times": list(model.times),
        "provenance": model.provenance,
        "shape": "shape",
        "paths": paths,
        "params": model.params,
        "warnings": list(model.warnings),
    }
    _dump_json(manifest, d / "manifest.json")


def load_model(directory) -> TsModel:
    d = Path(directory)
    mpath = d / "manifest.json"
    manifest = json.loads(mpath.read_text())
    if manifest.get("schema") != SCHEMA or manifest.get("kind") != "ts-model":
        raise FormatError(f"{mpath}: unsupported schema {manifest.get('schema')!r}")
    try:
        shape = read_image(d / manifest["shape"])
        m = float(manifest["m"])
        paths = {}
        for side in ("future", "past"):
            entry = manifest["paths"][side]
            v = read_field(d / entry["velocity"])
            if v.geom.dims != shape.geom.dims:
                raise FormatError(f"{side} velocity grid does not match the shape grid")
            if v.role != VELOCITY:
                raise FormatError(f"{side} field has role {v.role!r}, expected velocity")
            if float(entry["anchor"]) != m:
                raise FormatError(f"{side} gamma anchor {entry['anchor']} differs from m={m}")
            gamma = GammaCurve(tuple((t, g) for t, g in entry["gamma"]), entry["anchor"])
            paths[side] = PathModel(v, gamma, tuple(entry["domain"]), bool(entry["degenerate"]))
        return TsModel(
            shape=shape,
            m=m,
            path_future=paths["future"],
            path_past=paths["past"],
            range=tuple(manifest["range"]),
            provenance=manifest["provenance"],
            times=tuple(manifest.get("times", ())),
            warnings=tuple(manifest.get("warnings", ())),
            params=manifest.get("params", {}),
        )
    except FileNotFoundError:
        raise
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{mpath}: malformed manifest ({exc})") from exc
    except FormatError:
        raise
    except ValueError as exc:
        raise FormatError(f"{mpath}: invariant violation ({exc})") from exc


# ---------------------------------------------------------------------------
# reports and heatmaps

def report_dict(report, params: dict | None = None) -> dict:
    return {
        "schema": SCHEMA,
        "ds": report.ds,
        "dp": report.dp,
        "total": report.total,
        "interval": list(report.interval),
        "m": report.m,
        "n_time_samples": report.n_time_samples,
        "reference": report.reference,
        "mask_voxels": report.mask.count,
        "stats": report.stats,
        "warnings": report.warnings,
        "provenance": report.provenance,
        "params": params or {},
    }


def write_report(report, path, params: dict | None = None):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _dump_json(report_dict(report, params), Path(path))


def _to_bytes(arr: np.ndarray, scale_max: float) -> np.ndarray:
    if scale_max <= 0:
        return np.zeros(arr.shape, dtype=np.uint8)
    scaled = np.asarray(arr, dtype=np.float64) / scale_max * 255.0
    return np.clip(np.floor(scaled + 0.5), 0, 255).astype(np.uint8)


def _write_pgm(arr: np.ndarray, path: Path):
    h, w = arr.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + arr.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h = (int(x) for x in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def export_heatmap(img: ScalarImage, path, scale="auto") -> list:
    """Write an 8-bit PGM heatmap (three central slices for 3D) plus a sidecar JSON.

    ``scale`` is ``"auto"`` (map maximum) or a fixed upper value. Returns
    the written PGM paths.
    """
    vals = img.values.astype(np.float64)
    scale_max = float(vals.max()) if scale == "auto" else float(scale)
    if not math.isfinite(scale_max) or scale_max < 0:
        raise ValueError(f"invalid heatmap scale {scale!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = []
    if img.geom.ndim == 2:
        _write_pgm(_to_bytes(vals, scale_max), path)
        out.append(path)
    else:
        stem = path.with_suffix("")
        for ax in range(3):
            sl = vals.take(vals.shape[ax] // 2, axis=ax)
            p = stem.with_name(f"{stem.name}_axis{ax}.pgm")
            _write_pgm(_to_bytes(sl, scale_max), p)
            out.append(p)
    sidecar = {
        "scale_max": scale_max,
        "mapping": "linear [0, scale_max] -> [0, 255], round half up" if scale_max > 0 else "zero map: all 0",
        "files": [p.name for p in out],
    }
    _dump_json(sidecar, path.with_name(path.name + ".json"))
    return out
