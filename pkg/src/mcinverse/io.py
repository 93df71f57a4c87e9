"""Binary MCIP containers, JSON sidecars and CSV exports.

Every container starts with a 4-byte magic and a little-endian u32 version,
followed by a variant-specific header and the payload of complex values as
interleaved (re, im) float64 in C order:

    MCIP  MatrixField / FrequencyField   u32 n, u32 N_x, f64 L_x, f64 rho
    MCTK  TorusKernel                    u32 N, u32 n, f64 E
    MCBK  BoundaryKernel                 u32 N_b, u32 n, f64 E
    MCRF  ReconstructionField            u32 P, u32 n, u32 N, f64 E
                                         (P complex points, then P n x n values)

A FrequencyField is stored as MCIP with rho = NaN and L_x holding the lattice
step. Provenance goes to ``<path>.json``.
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .dtn import BoundaryKernel
from .errors import BadMagic, ContainerError, TruncatedFile, VersionMismatch
from .forward import TorusKernel
from .potentials import FrequencyField, MatrixField
from .rhp import ReconstructionField

VERSION = 1

_HEADERS = {
    b"MCIP": "<IIdd",
    b"MCTK": "<IId",
    b"MCBK": "<IId",
    b"MCRF": "<IIId",
}


def _complex_bytes(values):
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.complex128))
    return arr.astype("<c16", copy=False).tobytes()


def _read_complex(buf, offset, count):
    need = 16 * count
    if len(buf) - offset < need:
        raise TruncatedFile(f"payload needs {need} bytes, {len(buf) - offset} present")
    return np.frombuffer(buf, dtype="<c16", count=count, offset=offset).astype(np.complex128), offset + need


def _pack(obj):
    if isinstance(obj, MatrixField):
        v = obj.values
        head = struct.pack(_HEADERS[b"MCIP"], v.shape[2], v.shape[0], obj.half_width, obj.support_radius)
        return b"MCIP", head, v
    if isinstance(obj, FrequencyField):
        v = obj.values
        head = struct.pack(_HEADERS[b"MCIP"], v.shape[2], v.shape[0], obj.step, float("nan"))
        return b"MCIP", head, v
    if isinstance(obj, TorusKernel):
        v = obj.values
        return b"MCTK", struct.pack(_HEADERS[b"MCTK"], v.shape[0], v.shape[2], obj.energy), v
    if isinstance(obj, BoundaryKernel):
        v = obj.values
        return b"MCBK", struct.pack(_HEADERS[b"MCBK"], v.shape[0], v.shape[2], obj.energy), v
    if isinstance(obj, ReconstructionField):
        v = obj.values
        head = struct.pack(_HEADERS[b"MCRF"], v.shape[0], v.shape[1], obj.size, obj.energy)
        return b"MCRF", head, np.concatenate([obj.points.ravel(), v.ravel()])
    raise ContainerError(f"cannot serialise {type(obj).__name__}")


def dumps(obj) -> bytes:
    magic, head, payload = _pack(obj)
    return magic + struct.pack("<I", VERSION) + head + _complex_bytes(payload)


def loads(buf: bytes, meta=None):
    if len(buf) < 8:
        raise TruncatedFile("file shorter than the container preamble")
    magic = bytes(buf[:4])
    if magic not in _HEADERS:
        raise BadMagic(f"unknown magic {magic!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise VersionMismatch(f"container version {version}, expected {VERSION}")
    fmt = _HEADERS[magic]
    size = struct.calcsize(fmt)
    if len(buf) < 8 + size:
        raise TruncatedFile("header is incomplete")
    head = struct.unpack_from(fmt, buf, 8)
    off = 8 + size
    meta = meta or {}
    if magic == b"MCIP":
        n, nx, width, rho = head
        vals, off = _read_complex(buf, off, nx * nx * n * n)
        vals = vals.reshape(nx, nx, n, n)
        if np.isnan(rho):
            return FrequencyField(vals, width)
        return MatrixField(vals, width, rho, meta.get("meta", {}))
    if magic in (b"MCTK", b"MCBK"):
        nn, n, e = head
        vals, off = _read_complex(buf, off, nn * nn * n * n)
        cls = TorusKernel if magic == b"MCTK" else BoundaryKernel
        return cls(vals.reshape(nn, nn, n, n), e)
    p, n, nn, e = head
    vals, off = _read_complex(buf, off, p + p * n * n)
    return ReconstructionField(vals[:p].copy(), vals[p:].reshape(p, n, n), e, nn,
                               meta.get("source", "file"), meta.get("meta", {}))


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def save(obj, path, provenance=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(obj))
    side = {"type": type(obj).__name__}
    if isinstance(obj, MatrixField):
        side["meta"] = obj.meta
    if isinstance(obj, ReconstructionField):
        side["source"] = obj.source
        side["meta"] = obj.meta
    if provenance:
        side["provenance"] = provenance
    sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True, default=_json_default))
    return path


def load(path):
    path = Path(path)
    buf = path.read_bytes()
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else None
    return loads(buf, meta)


def header(path):
    """Magic, version and the variant header fields without reading the payload."""
    with open(path, "rb") as fh:
        pre = fh.read(64)
    if len(pre) < 8:
        raise TruncatedFile("file shorter than the container preamble")
    magic = bytes(pre[:4])
    if magic not in _HEADERS:
        raise BadMagic(f"unknown magic {magic!r}")
    (version,) = struct.unpack_from("<I", pre, 4)
    fmt = _HEADERS[magic]
    if len(pre) < 8 + struct.calcsize(fmt):
        raise TruncatedFile("header is incomplete")
    names = {
        b"MCIP": ("n", "N_x", "L_x", "rho"),
        b"MCTK": ("N", "n", "E"),
        b"MCBK": ("N_b", "n", "E"),
        b"MCRF": ("P", "n", "N", "E"),
    }[magic]
    return dict(magic=magic.decode(), version=version, **dict(zip(names, struct.unpack_from(fmt, pre, 8))))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def export_csv(obj, path):
    """Long-format CSV: torus/boundary kernels as (j, j', a, b, re, im); fields as (x1, x2, a, b, re, im)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(obj, (TorusKernel, BoundaryKernel)):
            w.writerow(["j", "jp", "a", "b", "re", "im"])
            for idx in np.ndindex(obj.values.shape):
                z = obj.values[idx]
                w.writerow([*idx, repr(z.real), repr(z.imag)])
        elif isinstance(obj, ReconstructionField):
            w.writerow(["x1", "x2", "a", "b", "re", "im"])
            for p, zpt in enumerate(obj.points):
                for a, b in np.ndindex(obj.values.shape[1:]):
                    z = obj.values[p, a, b]
                    w.writerow([repr(zpt.real), repr(zpt.imag), a, b, repr(z.real), repr(z.imag)])
        elif isinstance(obj, MatrixField):
            w.writerow(["x1", "x2", "a", "b", "re", "im"])
            x = obj.axis
            for i, j, a, b in np.ndindex(obj.values.shape):
                z = obj.values[i, j, a, b]
                w.writerow([repr(x[i]), repr(x[j]), a, b, repr(z.real), repr(z.imag)])
        else:
            raise ContainerError(f"no CSV layout for {type(obj).__name__}")
    return path
