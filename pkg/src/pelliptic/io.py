"""Serialization: matrices as [re, im] JSON pairs, binary grids, CSV exports."""

from __future__ import annotations

import csv
import io as _io
import json
import math
import struct
from pathlib import Path

import numpy as np

GRID_MAGIC = b"PELLGRID"
GRID_VERSION = 1


def _to_complex(entry) -> complex:
    if isinstance(entry, (int, float)):
        return complex(entry)
    if isinstance(entry, (list, tuple)) and len(entry) == 2 and all(isinstance(v, (int, float)) for v in entry):
        return complex(entry[0], entry[1])
    raise ValueError(f"cannot read complex number from {entry!r}")


def parse_matrix(obj) -> np.ndarray:
    """Square complex matrix from nested rows or a flat row-major list of [re, im] pairs."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    if isinstance(obj, dict):
        obj = obj.get("matrix", obj.get("A"))
    if not isinstance(obj, (list, tuple)) or not obj:
        raise ValueError("matrix must be a non-empty JSON array")
    nested = all(isinstance(row, (list, tuple)) and len(row) == len(obj) for row in obj)
    if nested:
        return np.array([[_to_complex(e) for e in row] for row in obj], dtype=complex)
    flat = [_to_complex(e) for e in obj]
    n = int(round(math.sqrt(len(flat))))
    if n * n != len(flat):
        raise ValueError(f"flat matrix of {len(flat)} entries is not square")
    return np.array(flat, dtype=complex).reshape(n, n)


def parse_vector(obj) -> np.ndarray:
    if isinstance(obj, str):
        obj = json.loads(obj)
    return np.array([_to_complex(e) for e in obj], dtype=complex)


def matrix_to_json(A) -> list:
    A = np.asarray(A, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in A]


def json_number(x):
    """JSON-safe float: infinities become strings, numpy scalars become floats."""
    if x is None:
        return None
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def jsonable(obj):
    """Recursively convert numpy containers and floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [json_number(obj.real), json_number(obj.imag)]
    if isinstance(obj, (float, int, np.floating, np.integer, np.bool_, bool)) or obj is None:
        return json_number(obj)
    return obj


def dump_json(obj, path=None) -> str:
    """Deterministic JSON text (sorted keys); written to ``path`` when given."""
    text = json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def write_grid(path, values: np.ndarray, meshes, n: int | None = None) -> None:
    """Binary grid: magic, version, n, shape, meshes, then interleaved re/im float64."""
    values = np.asarray(values, dtype=complex)
    meshes = [float(m) for m in meshes]
    n = values.ndim if n is None else n
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<II", GRID_VERSION, n))
        fh.write(struct.pack("<I", values.ndim))
        fh.write(struct.pack(f"<{values.ndim}Q", *values.shape))
        fh.write(struct.pack("<I", len(meshes)))
        fh.write(struct.pack(f"<{len(meshes)}d", *meshes))
        payload = np.empty(values.size * 2, dtype="<f8")
        flat = values.ravel()
        payload[0::2] = flat.real
        payload[1::2] = flat.imag
        fh.write(payload.tobytes())


def read_grid(path):
    """Inverse of write_grid: returns (values, meshes, n)."""
    data = Path(path).read_bytes()
    if data[:8] != GRID_MAGIC:
        raise ValueError("not a grid file")
    off = 8
    version, n = struct.unpack_from("<II", data, off)
    off += 8
    if version != GRID_VERSION:
        raise ValueError(f"unsupported grid version {version}")
    (ndim,) = struct.unpack_from("<I", data, off)
    off += 4
    shape = struct.unpack_from(f"<{ndim}Q", data, off)
    off += 8 * ndim
    (nm,) = struct.unpack_from("<I", data, off)
    off += 4
    meshes = list(struct.unpack_from(f"<{nm}d", data, off))
    off += 8 * nm
    payload = np.frombuffer(data, dtype="<f8", offset=off)
    values = (payload[0::2] + 1j * payload[1::2]).reshape(shape)
    return values, meshes, n


def boundary_csv(coords: np.ndarray, values: np.ndarray) -> str:
    """CSV text with one row per boundary vertex: lateral coordinates then value."""
    coords = np.asarray(coords).reshape(-1, np.asarray(coords).shape[-1])
    values = np.asarray(values).ravel()
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{i + 1}" for i in range(coords.shape[1])] + ["value"])
    for c, v in zip(coords, values):
        w.writerow([f"{x:.12g}" for x in c] + [f"{v:.12g}"])
    return buf.getvalue()


def field_csv(points: np.ndarray, A: np.ndarray, B: np.ndarray) -> str:
    """CSV of sampled coefficients: coordinates, Re/Im of A_ij, Re/Im of B_i."""
    n = A.shape[-1]
    pts = np.asarray(points).reshape(-1, n)
    A = np.asarray(A).reshape(-1, n, n)
    B = np.asarray(B).reshape(-1, n)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = [f"x{i}" for i in range(n)]
    head += [f"{part}A{i}{j}" for i in range(n) for j in range(n) for part in ("re", "im")]
    head += [f"{part}B{i}" for i in range(n) for part in ("re", "im")]
    w.writerow(head)
    for p, a, b in zip(pts, A, B):
        row = [f"{x:.12g}" for x in p]
        row += [f"{v:.12g}" for z in a.ravel() for v in (z.real, z.imag)]
        row += [f"{v:.12g}" for z in b for v in (z.real, z.imag)]
        w.writerow(row)
    return buf.getvalue()


def save_mask_cache(directory, key: str, arrays: dict) -> Path:
    path = Path(directory) / f"mask-{key[:16]}.npz"
    np.savez_compressed(path, **arrays)
    return path


def load_mask_cache(directory, key: str):
    path = Path(directory) / f"mask-{key[:16]}.npz"
    if not path.exists():
        return None
    with np.load(path) as data:
        return {k: data[k] for k in data.files}
