"""Persistence: a versioned named-array container plus JSON/CSV writers.

Container layout (all integers little-endian)::

    magic    8 bytes   b"PIWNOARR"
    version  uint32    FORMAT_VERSION
    hlen     uint64    length of the JSON header in bytes
    header   hlen      UTF-8 JSON, keys sorted, no whitespace
    count    uint32    number of array records
    record*  count     name_len uint32, name UTF-8,
                       dtype_len uint32, dtype string (numpy descr, e.g. "<f8"),
                       ndim uint32, shape uint64 * ndim,
                       nbytes uint64, raw C-order little-endian data

Records are written in sorted name order, so identical content always gives
identical bytes on every platform.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
import os
import struct
import subprocess
from importlib import metadata
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "FORMAT_VERSION", "save_arrays", "load_arrays", "read_header", "digest_arrays",
           "write_json", "read_json", "write_csv", "version_string", "jsonable"]

MAGIC = b"PIWNOARR"
FORMAT_VERSION = 1
_ALLOWED_KINDS = "biuf"


def jsonable(obj):
    """Recursively convert numpy scalars/arrays, tuples and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _canonical(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype.kind not in _ALLOWED_KINDS:
        raise TypeError(f"unsupported dtype {a.dtype} (bool, int, uint and float only)")
    # astype with order="C" keeps 0-d arrays 0-d (ascontiguousarray would promote them)
    return a.astype(a.dtype.newbyteorder("<"), order="C", copy=False)


def _encode(arrays: dict, header: dict | None) -> bytes:
    buf = _io.BytesIO()
    head = json.dumps(jsonable(header or {}), sort_keys=True, separators=(",", ":")).encode()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQ", FORMAT_VERSION, len(head)))
    buf.write(head)
    buf.write(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        a = _canonical(arrays[name])
        nb, db = name.encode(), a.dtype.str.encode()
        buf.write(struct.pack("<I", len(nb)) + nb)
        buf.write(struct.pack("<I", len(db)) + db)
        buf.write(struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape))
        raw = a.tobytes(order="C")
        buf.write(struct.pack("<Q", len(raw)))
        buf.write(raw)
    return buf.getvalue()


def save_arrays(path, arrays: dict, header: dict | None = None) -> Path:
    """Write ``arrays`` (name -> array) and a JSON ``header`` atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = _encode(arrays, header)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated container")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _decode(data: bytes, header_only: bool = False):
    r = _Reader(data)
    if r.take(len(MAGIC)) != MAGIC:
        raise ValueError("not a named-array container (bad magic)")
    version, hlen = r.unpack("<IQ")
    if version > FORMAT_VERSION:
        raise ValueError(f"container version {version} is newer than supported {FORMAT_VERSION}")
    header = json.loads(r.take(hlen).decode())
    if header_only:
        return header, {}
    (count,) = r.unpack("<I")
    arrays = {}
    for _ in range(count):
        (ln,) = r.unpack("<I")
        name = r.take(ln).decode()
        (ld,) = r.unpack("<I")
        dtype = np.dtype(r.take(ld).decode())
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        (nbytes,) = r.unpack("<Q")
        if nbytes != dtype.itemsize * int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"record {name!r}: byte count does not match shape and dtype")
        arrays[name] = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if r.pos != len(data):
        raise ValueError("trailing bytes after the last record")
    return header, arrays


def load_arrays(path) -> tuple[dict, dict]:
    """Return ``(header, arrays)``."""
    return _decode(Path(path).read_bytes())


def read_header(path) -> dict:
    return _decode(Path(path).read_bytes(), header_only=True)[0]


def digest_arrays(arrays: dict) -> str:
    """SHA-256 of the canonical encoding of ``arrays`` (header excluded)."""
    return hashlib.sha256(_encode(arrays, None)).hexdigest()


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def write_csv(path, rows: list, columns: list | None = None, comment: str | None = None) -> Path:
    """Write a list of dicts (or a dict of equal-length columns) as CSV.

    ``comment`` lines are written first, each prefixed with ``#``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(rows, dict):
        cols = list(rows)
        rows = [dict(zip(cols, vals)) for vals in zip(*(np.asarray(rows[c]).ravel() for c in cols))]
    columns = columns or (list(rows[0]) if rows else [])
    with path.open("w", newline="") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: jsonable(row.get(k)) for k in columns})
    return path


def version_string() -> str:
    """Package version plus ``git describe`` output when available."""
    try:
        base = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        base = "0+unknown"
    try:
        here = Path(__file__).resolve().parent
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here, capture_output=True,
                             text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{base}+git.{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base
