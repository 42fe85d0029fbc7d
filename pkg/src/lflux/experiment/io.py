"""Binary snapshot files and CSV/JSON report writers.

Snapshot layout, all little-endian::

    offset  size  field
    0       4     magic b"LFLX"
    4       2     format version (u16, currently 1)
    6       2     dim (u16)
    8       4     n (u32)
    12      4     velocity component count (u32)
    16      8     viscosity (f64, NaN when unknown)
    24      8     time (f64)
    32      1     pressure flag (u8, 0 or 1)
    33      ...   velocity samples, f64, shape (components, n, ..., n), C order
            ...   pressure samples, f64, shape (n, ..., n), if flagged

Samples are real-space grid values, so a save/load round trip reproduces
them bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
import struct
import warnings
from pathlib import Path

import numpy as np

from ..solver import Snapshot
from ..spectral import Grid, RealSamples, divergence, to_spectral

MAGIC = b"LFLX"
VERSION = 1
HEADER = struct.Struct("<4sHHIIddB")
DIVERGENCE_WARN = 1e-8


class SnapshotFormatError(ValueError):
    code = 10


class BadMagicError(SnapshotFormatError):
    code = 11


class VersionMismatchError(SnapshotFormatError):
    code = 12


class TruncatedFileError(SnapshotFormatError):
    code = 13


class CorruptHeaderError(SnapshotFormatError):
    code = 14


class DivergenceWarning(UserWarning):
    pass


def encode_snapshot(snap: Snapshot) -> bytes:
    u = snap.u
    grid = u.grid
    nu = math.nan if snap.viscosity is None else float(snap.viscosity)
    has_p = snap.p is not None
    head = HEADER.pack(MAGIC, VERSION, grid.dim, grid.n, u.components, nu, float(snap.t), int(has_p))
    parts = [head, np.ascontiguousarray(u.values, dtype="<f8").tobytes()]
    if has_p:
        parts.append(np.ascontiguousarray(snap.p.values[0], dtype="<f8").tobytes())
    return b"".join(parts)


def decode_snapshot(data: bytes) -> Snapshot:
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < HEADER.size:
        raise TruncatedFileError(f"header needs {HEADER.size} bytes, file has {len(data)}")
    _, version, dim, n, comps, nu, t, has_p = HEADER.unpack_from(data)
    if version != VERSION:
        raise VersionMismatchError(f"format version {version}, reader supports {VERSION}")
    try:
        grid = Grid(dim, n)
    except ValueError as exc:
        raise CorruptHeaderError(str(exc)) from exc
    if comps != dim:
        raise CorruptHeaderError(f"{comps} velocity components for dim={dim}")
    if has_p not in (0, 1):
        raise CorruptHeaderError(f"pressure flag {has_p} is not 0 or 1")
    block = grid.npoints * 8
    expected = HEADER.size + block * (comps + has_p)
    if len(data) < expected:
        raise TruncatedFileError(f"payload needs {expected} bytes, file has {len(data)}")
    if len(data) > expected:
        raise CorruptHeaderError(f"{len(data) - expected} trailing bytes after payload")

    body = np.frombuffer(data, dtype="<f8", offset=HEADER.size).astype(np.float64)
    vel = body[: comps * grid.npoints].reshape((comps,) + grid.shape)
    u = to_spectral(RealSamples(grid, vel))
    p = None
    if has_p:
        p = to_spectral(RealSamples(grid, body[comps * grid.npoints :].reshape(grid.shape)))

    div = float(np.max(np.abs(divergence(u).values)))
    flag = not div <= DIVERGENCE_WARN
    if flag:
        warnings.warn(f"loaded velocity has max |div u| = {div:.3g}", DivergenceWarning, stacklevel=3)
    return Snapshot(float(t), u, p, None if math.isnan(nu) else float(nu), divergence_warning=flag)


def save_snapshot(path: str | Path, snap: Snapshot):
    Path(path).write_bytes(encode_snapshot(snap))


def load_snapshot(path: str | Path) -> Snapshot:
    return decode_snapshot(Path(path).read_bytes())


# -- reports ----------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return v


def write_csv(path: str | Path, rows: list[dict], provenance: dict, columns: list[str] | None = None):
    """CSV with one ``# provenance: {...}`` comment line, then a header row."""
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        fh.write("# provenance: " + json.dumps(provenance, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def read_csv(path: str | Path) -> tuple[dict, list[dict]]:
    with open(path, newline="") as fh:
        first = fh.readline()
        prov = json.loads(first.split(":", 1)[1]) if first.startswith("# provenance:") else {}
        if not prov:
            fh.seek(0)
        rows = [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]
    return prov, rows


def write_json(path: str | Path, doc: dict, provenance: dict):
    out = dict(doc)
    out["provenance"] = provenance
    Path(path).write_text(json.dumps(out, indent=2, sort_keys=True, allow_nan=True) + "\n")
