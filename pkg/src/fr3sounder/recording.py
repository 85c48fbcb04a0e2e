"""Binary CIR recording format.

Layout (little-endian throughout)::

    magic           4s   b"CSND"
    format_version  u16
    header_length   u32
    header          header_length bytes of UTF-8 JSON
    records         record_count × fixed-size CIR records

Each record is ``timestamp_ns u64, node_id u16, array_id u8, beam_id u16
(0xFFFF = omni), n_taps u32, power_reference_dbm f32`` followed by
``n_taps`` interleaved ``(f32 real, f32 imag)`` pairs.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .campaign import Recording
from .receiver import CaptureInfo, Cir

MAGIC = b"CSND"
FORMAT_VERSION = 1
OMNI_BEAM_ID = 0xFFFF
_PREAMBLE = struct.Struct("<4sHI")
_RECORD_HEAD = np.dtype(
    [("timestamp_ns", "<u8"), ("node_id", "<u2"), ("array_id", "u1"), ("beam_id", "<u2"),
     ("n_taps", "<u4"), ("power_reference_dbm", "<f4")]
)


class RecordingFormatError(ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} (at byte offset {offset})")


class BadMagicError(RecordingFormatError):
    pass


class VersionMismatchError(RecordingFormatError):
    pass


class TruncatedError(RecordingFormatError):
    pass


class HeaderError(RecordingFormatError):
    pass


def record_dtype(n_taps: int) -> np.dtype:
    fields = list(_RECORD_HEAD.descr) + [("taps", "<f4", (n_taps, 2))]
    return np.dtype(fields)


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def write_recording(recording: Recording) -> bytes:
    records = recording.records
    n_taps = len(records[0].taps) if records else int(recording.header.get("n_taps", 0))
    header = dict(recording.header)
    header["record_count"] = len(records)
    header["n_taps"] = n_taps
    blob = _canonical_json(header)
    out = bytearray(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(blob)))
    out += blob
    if records:
        arr = np.zeros(len(records), dtype=record_dtype(n_taps))
        for i, r in enumerate(records):
            if len(r.taps) != n_taps:
                raise ValueError("all records in a file must have the same tap count")
            info = r.info
            arr[i]["timestamp_ns"] = int(round(info.timestamp * 1e9))
            arr[i]["node_id"] = info.node_id
            arr[i]["array_id"] = info.array_id
            arr[i]["beam_id"] = OMNI_BEAM_ID if info.beam_id is None else info.beam_id
            arr[i]["n_taps"] = n_taps
            arr[i]["power_reference_dbm"] = r.power_reference_dbm
            arr[i]["taps"][:, 0] = r.taps.real
            arr[i]["taps"][:, 1] = r.taps.imag
        out += arr.tobytes()
    return bytes(out)


def read_recording(data: bytes, salvage: bool = False) -> Recording:
    """Parse a recording. With ``salvage=True`` a truncated body yields the
    complete records that precede the cut; ``header['truncated_at']`` marks it."""
    data = bytes(data)
    if len(data) < _PREAMBLE.size:
        raise TruncatedError("file shorter than the fixed preamble", len(data))
    magic, version, hlen = _PREAMBLE.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version} not supported (expected {FORMAT_VERSION})", 4)
    start = _PREAMBLE.size
    if len(data) < start + hlen:
        raise TruncatedError("header truncated", len(data))
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"header is not valid JSON: {exc}", start) from None
    if not isinstance(header, dict):
        raise HeaderError("header JSON must be an object", start)
    try:
        count = int(header["record_count"])
        n_taps = int(header["n_taps"])
    except (KeyError, TypeError, ValueError):
        raise HeaderError("header lacks integer record_count/n_taps", start) from None
    if count < 0 or n_taps < 0 or (count and n_taps == 0):
        raise HeaderError(f"invalid record_count={count} n_taps={n_taps}", start)

    body = start + hlen
    dt = record_dtype(n_taps)
    available = (len(data) - body) // dt.itemsize
    if available < count:
        cut = body + available * dt.itemsize
        if not salvage:
            raise TruncatedError(f"body truncated: {available} of {count} records complete", cut)
        header = dict(header, truncated_at=cut)
        count = available
    elif len(data) - body != count * dt.itemsize:
        raise RecordingFormatError("trailing bytes after the declared records", body + count * dt.itemsize)

    arr = np.frombuffer(data, dtype=dt, count=count, offset=body)
    if count and np.any(arr["n_taps"] != n_taps):
        bad = int(np.flatnonzero(arr["n_taps"] != n_taps)[0])
        raise RecordingFormatError("record tap count differs from header", body + bad * dt.itemsize)
    spacing = _tap_spacing(header)
    records = []
    for rec in arr:
        beam = int(rec["beam_id"])
        info = CaptureInfo(int(rec["timestamp_ns"]) / 1e9, int(rec["node_id"]), int(rec["array_id"]),
                           None if beam == OMNI_BEAM_ID else beam)
        taps = rec["taps"][:, 0].astype(np.float64) + 1j * rec["taps"][:, 1].astype(np.float64)
        records.append(Cir(taps, spacing, float(rec["power_reference_dbm"]), info))
    return Recording(header, records)


def _tap_spacing(header) -> float:
    cfg = header.get("config") if isinstance(header.get("config"), dict) else None
    try:
        return 1.0 / (float(cfg["zc_length"]) * float(cfg["subcarrier_spacing"]))
    except (TypeError, KeyError, ValueError, ZeroDivisionError):
        return 0.0


def save_recording(recording: Recording, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_recording(recording))


def load_recording(path, salvage: bool = False) -> Recording:
    with open(path, "rb") as fh:
        return read_recording(fh.read(), salvage)
