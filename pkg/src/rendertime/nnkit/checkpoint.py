"""Checkpoint file format.

Layout: b"RTCK" magic, uint32 LE JSON length, UTF-8 JSON document, then a
little-endian float32 blob. The JSON carries the user header plus an ordered
entry list {name, shape}; arrays are stored in entry order, C contiguous.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RTCK"


def save_checkpoint(path, header: dict, params: dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape)})
        blobs.append(arr.tobytes())
    doc = json.dumps({"header": header, "entries": entries}).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(doc)))
        f.write(doc)
        for b in blobs:
            f.write(b)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    (doc_len,) = struct.unpack("<I", raw[4:8])
    doc = json.loads(raw[8 : 8 + doc_len].decode("utf-8"))
    params = {}
    offset = 8 + doc_len
    for entry in doc["entries"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) * 4 if shape else 4
        arr = np.frombuffer(raw[offset : offset + size], dtype="<f4").reshape(shape)
        params[entry["name"]] = arr.copy()
        offset += size
    return doc["header"], params
