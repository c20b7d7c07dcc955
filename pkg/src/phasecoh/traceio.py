"""On-disk formats: binary trace files, CSV tables and JSON documents.

Trace file layout (little-endian)::

    offset  size  field
    0       4     magic b"QPHS"
    4       4     format version (u32)
    8       8     number of shots N (u64)
    16      4     samples per shot L (u32)
    20      8     dt in ns (f64)
    28      8     start time in ns (f64)
    36      4     flags (u32); bit 0 set when emission flags are appended
    40      24    zero padding
    64      N*L*8 samples, per shot interleaved f32 I, Q
    ...     N     emission flags, one byte per shot (optional)
"""

from __future__ import annotations

import json
import math
import os
import struct
from pathlib import Path

import numpy as np

from .errors import TraceFormatError
from .simulate import TraceSet

MAGIC = b"QPHS"
VERSION = 1
HEADER_SIZE = 64
FLAG_EMISSION = 1
_HEADER = struct.Struct("<4sIQIddI")


def write_traceset(path, traceset: TraceSet):
    tr = np.ascontiguousarray(traceset.traces, dtype="<c8")
    flags = FLAG_EMISSION if traceset.emission_flags is not None else 0
    header = _HEADER.pack(MAGIC, VERSION, traceset.n_shots, traceset.record_length,
                          float(traceset.dt), float(traceset.start_time), flags)
    header += b"\0" * (HEADER_SIZE - len(header))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(tr.tobytes())
        if flags & FLAG_EMISSION:
            fh.write(np.asarray(traceset.emission_flags, dtype=np.uint8).tobytes())


def read_header(path):
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE:
        raise TraceFormatError(f"file shorter than the {HEADER_SIZE}-byte header", len(raw))
    magic, version, n, length, dt, start, flags = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TraceFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise TraceFormatError(f"unsupported format version {version}", 4)
    if n < 1:
        raise TraceFormatError("header declares zero shots", 8)
    if length < 1:
        raise TraceFormatError("header declares zero samples per shot", 16)
    if not (math.isfinite(dt) and dt > 0):
        raise TraceFormatError(f"invalid dt {dt}", 20)
    if not math.isfinite(start):
        raise TraceFormatError(f"invalid start time {start}", 28)
    if flags & ~FLAG_EMISSION:
        raise TraceFormatError(f"unknown flag bits {flags:#x}", 36)
    return {"shots": n, "samples": length, "dt": dt, "start_time": start, "flags": flags}


def read_traceset(path) -> TraceSet:
    """Load a trace file; raises :class:`TraceFormatError` on malformed input."""
    hdr = read_header(path)
    n, length = hdr["shots"], hdr["samples"]
    payload = n * length * 8
    has_flags = bool(hdr["flags"] & FLAG_EMISSION)
    expected = HEADER_SIZE + payload + (n if has_flags else 0)
    size = os.path.getsize(path)
    if size != expected:
        raise TraceFormatError(f"file size {size} does not match header (expected {expected})",
                               min(size, expected))
    with open(path, "rb") as fh:
        fh.seek(HEADER_SIZE)
        data = np.frombuffer(fh.read(payload), dtype="<c8").reshape(n, length)
        flags = None
        if has_flags:
            raw = np.frombuffer(fh.read(n), dtype=np.uint8)
            if np.any(raw > 1):
                bad = int(np.argmax(raw > 1))
                raise TraceFormatError("emission flag byte not 0/1", HEADER_SIZE + payload + bad)
            flags = raw.astype(bool)
    if not np.all(np.isfinite(data)):
        bad = int(np.argmax(~np.isfinite(data).ravel()))
        raise TraceFormatError("non-finite sample", HEADER_SIZE + 8 * bad)
    return TraceSet(data.astype(np.complex64), hdr["dt"], hdr["start_time"], flags)


def write_csv(path, columns: dict):
    """Write equal-length columns with a one-line header. Floats use repr for exact round trips."""
    names = list(columns)
    cols = [np.asarray(columns[k]).ravel() for k in names]
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise ValueError("CSV columns differ in length")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_csv(path) -> dict:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    out = {}
    for i, name in enumerate(header):
        col = [r[i] for r in rows]
        try:
            out[name] = np.array([float(v) for v in col])
        except ValueError:
            out[name] = np.array(col)
    return out


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())
