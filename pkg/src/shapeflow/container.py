"""Binary container shared by flow checkpoints and shape-space files.

Layout (all integers little-endian)::

    bytes 0-3    magic b"SFLW"
    bytes 4-7    uint32 format version (currently 1)
    bytes 8-15   uint64 header length H
    next H bytes UTF-8 JSON header, keys sorted, no insignificant whitespace:
                 {"arrays": [{"name": str, "shape": [int, ...]}, ...],
                  "kind": str, "meta": {...}, "payload_bytes": int}
    payload      every array of header["arrays"], in that order, as C-ordered
                 64-bit IEEE-754 little-endian floats

Integer data (faces, parent indices) is stored as float64 too; values are
exact below 2**53. The writer is deterministic, so equal inputs give
byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path
import struct

import numpy as np

from .errors import FormatError

MAGIC = b"SFLW"
VERSION = 1


def container_bytes(kind, meta, arrays) -> bytes:
    """Serialize ``arrays`` (a sequence of ``(name, array)``) with ``meta``."""
    specs, chunks = [], []
    for name, arr in arrays:
        arr = np.asarray(arr, dtype="<f8")
        specs.append({"name": name, "shape": list(arr.shape)})
        chunks.append(np.ascontiguousarray(arr).tobytes())
    payload = b"".join(chunks)
    header = {"arrays": specs, "kind": kind, "meta": meta, "payload_bytes": len(payload)}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":"),
                        allow_nan=False).encode("utf-8")
    return MAGIC + struct.pack("<IQ", VERSION, len(hbytes)) + hbytes + payload


def write_container(path, kind, meta, arrays):
    data = container_bytes(kind, meta, arrays)
    try:
        Path(path).write_bytes(data)
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from None


def parse_container(data: bytes, source="<bytes>"):
    """Returns ``(kind, meta, arrays)`` with ``arrays`` an insertion-ordered dict."""
    if len(data) < 16 or data[:4] != MAGIC:
        raise FormatError(f"{source}: not a shapeflow container")
    version, hlen = struct.unpack("<IQ", data[4:16])
    if version != VERSION:
        raise FormatError(f"{source}: unsupported container version {version}")
    try:
        header = json.loads(data[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError(f"{source}: corrupt header") from None
    payload = data[16 + hlen:]
    if len(payload) != header.get("payload_bytes"):
        raise FormatError(f"{source}: payload has {len(payload)} bytes, "
                          f"header declares {header.get('payload_bytes')}")
    arrays = {}
    pos = 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        chunk = payload[pos:pos + 8 * n]
        if len(chunk) != 8 * n:
            raise FormatError(f"{source}: truncated array {spec['name']}")
        arrays[spec["name"]] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)
        pos += 8 * n
    return header["kind"], header["meta"], arrays


def read_container(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from None
    return parse_container(data, str(path))
