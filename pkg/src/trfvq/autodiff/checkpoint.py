"""The TVQ1 checkpoint container.

Layout: ``b"TVQ1"``, a little-endian uint32 header length, a UTF-8 JSON header,
then the concatenated little-endian float32 payloads. The header is::

    {"meta": {...}, "tensors": [{"name", "shape", "dtype": "f32", "byte_offset"}, ...]}

with ``byte_offset`` counted from the first payload byte. Keys are sorted so
identical contents always serialize to identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TVQ1"


class CheckpointError(ValueError):
    pass


def dumps(tensors: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    entries, payload, offset = [], [], 0
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "dtype": "f32",
                        "byte_offset": offset})
        payload.append(data)
        offset += len(data)
    header = json.dumps({"meta": meta or {}, "tensors": entries}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header + b"".join(payload)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a TVQ1 checkpoint (bad magic)")
    if len(blob) < 8:
        raise CheckpointError("truncated checkpoint header")
    (n,) = struct.unpack("<I", blob[4:8])
    try:
        header = json.loads(blob[8:8 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    base = 8 + n
    tensors = {}
    for e in header["tensors"]:
        if e["dtype"] != "f32":
            raise CheckpointError(f"unsupported dtype {e['dtype']!r}")
        count = int(np.prod(e["shape"], dtype=np.int64))
        start = base + e["byte_offset"]
        if start + 4 * count > len(blob):
            raise CheckpointError(f"payload for {e['name']!r} is truncated")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(np.float32)
    return tensors, header.get("meta", {})


def save(path, tensors: dict[str, np.ndarray], meta: dict | None = None):
    Path(path).write_bytes(dumps(tensors, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())


def array_hash(arr: np.ndarray) -> str:
    """SHA-256 of an array's float32 little-endian bytes and shape."""
    a = np.ascontiguousarray(arr, dtype="<f4")
    h = hashlib.sha256(repr(a.shape).encode())
    h.update(a.tobytes())
    return h.hexdigest()
