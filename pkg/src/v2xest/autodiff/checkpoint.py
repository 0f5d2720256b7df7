"""Checkpoint file layout (all integers little-endian)::

    8 bytes   magic  b"V2XCKPT1"
    8 bytes   uint64 header length N
    N bytes   UTF-8 JSON header:
              {"meta": {...}, "blocks": [{"name", "shape", "offset", "count"}, ...]}
    payload   float64 little-endian values, blocks back to back in header order

``offset`` and ``count`` are in float64 elements from the start of the payload.
"""
from __future__ import annotations

import json
import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

MAGIC = b"V2XCKPT1"


def save_checkpoint(path, state: dict, meta: dict) -> None:
    blocks, offset = [], 0
    for name, arr in state.items():
        arr = np.asarray(arr, dtype=np.float64)
        blocks.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        offset += arr.size
    header = json.dumps({"meta": meta, "blocks": blocks}, sort_keys=True).encode()
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for arr in state.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> tuple:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint (bad magic)")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + n].decode())
    payload = np.frombuffer(raw[16 + n:], dtype="<f8")
    state = OrderedDict()
    for b in header["blocks"]:
        vals = payload[b["offset"]:b["offset"] + b["count"]]
        if vals.size != b["count"]:
            raise ValueError(f"{path}: truncated block {b['name']}")
        state[b["name"]] = vals.astype(np.float64).reshape(b["shape"])
    return state, header["meta"]
