"""Deterministic self-describing binary container.

Layout::

    MAGIC (8 bytes) | header length (uint64 LE) | JSON header | payload

The JSON header (sorted keys) lists every array with dtype, row-major shape
and byte offset into the payload, plus the payload's SHA-256. Nothing in the
file depends on time or platform, so equal content gives equal bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .errors import IntegrityError, SchemaError
from .io import atomic_write_bytes

_DTYPES = {"f8": "<f8", "i8": "<i8", "b1": "|b1"}


def encode(kind: str, version: int, meta: dict, arrays: dict, magic: bytes) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in arrays.items():
        a = np.asarray(arr)
        code = {"f": "f8", "i": "i8", "u": "i8", "b": "b1"}[a.dtype.kind]
        raw = np.ascontiguousarray(a.astype(_DTYPES[code])).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(a.shape), "offset": offset,
                        "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {"kind": kind, "version": version, "meta": meta, "arrays": entries,
              "payload_bytes": len(payload), "sha256": hashlib.sha256(payload).hexdigest()}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return magic + struct.pack("<Q", len(hbytes)) + hbytes + payload


def decode(data: bytes, magic: bytes):
    if len(data) < len(magic) + 8 or data[:len(magic)] != magic:
        raise IntegrityError("not a recognized file (bad magic or truncated header)")
    (hlen,) = struct.unpack("<Q", data[len(magic):len(magic) + 8])
    start = len(magic) + 8
    if len(data) < start + hlen:
        raise IntegrityError("file truncated inside the header")
    try:
        header = json.loads(data[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IntegrityError(f"corrupt header: {exc}") from exc
    payload = data[start + hlen:]
    if len(payload) != header.get("payload_bytes"):
        raise IntegrityError(
            f"payload has {len(payload)} bytes, header declares {header.get('payload_bytes')}")
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise IntegrityError("payload checksum mismatch")
    arrays = {}
    for e in header["arrays"]:
        if e["dtype"] not in _DTYPES:
            raise SchemaError(f"unknown dtype {e['dtype']!r} for array {e['name']!r}")
        raw = payload[e["offset"]:e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(raw, dtype=_DTYPES[e["dtype"]]).reshape(e["shape"]).copy()
    return header, arrays


def write(path, kind, version, meta, arrays, magic):
    atomic_write_bytes(path, encode(kind, version, meta, arrays, magic))


def read(path, magic):
    with open(path, "rb") as fh:
        return decode(fh.read(), magic)
