"""Checkpoint files: a JSON header followed by a little-endian float32 blob.

Layout::

    8 bytes   magic  b"NEUROCKP"
    8 bytes   header length L, unsigned little-endian
    L bytes   UTF-8 JSON header (sorted keys)
    ...       float32 LE data of every tensor listed in header["tensors"],
              in that order, each C-contiguous

The header carries ``schema_version``, ``tensors`` (name, shape, kind) and
whatever metadata the caller adds (variant, seed, scheduler state, ...).
"""
import json
import struct

import numpy as np

MAGIC = b"NEUROCKP"
SCHEMA_VERSION = 1


def save_checkpoint(path, store, meta=None):
    tensors = [{"name": k, "shape": list(v.shape), "kind": "param"} for k, v in store.params.items()]
    tensors += [{"name": k, "shape": list(v.shape), "kind": "buffer"} for k, v in store.buffers.items()]
    header = {"schema_version": SCHEMA_VERSION, "tensors": tensors}
    header.update(meta or {})
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for t in tensors:
            fh.write(np.ascontiguousarray(store[t["name"]], dtype="<f4").tobytes())


def load_checkpoint(path):
    """Return ``(header, {name: float32 array})``."""
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (n,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(n).decode("utf-8"))
        if header.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema {header.get('schema_version')}")
        arrays = {}
        for t in header["tensors"]:
            count = int(np.prod(t["shape"], dtype=np.int64))
            data = np.frombuffer(fh.read(4 * count), dtype="<f4")
            if data.size != count:
                raise ValueError(f"{path}: truncated tensor {t['name']}")
            arrays[t["name"]] = data.reshape(t["shape"]).astype(np.float32)
    return header, arrays


def load_into(store, arrays):
    for name, arr in arrays.items():
        target = store[name]
        if target.shape != arr.shape:
            raise ValueError(f"shape mismatch for {name}: {target.shape} vs {arr.shape}")
        target[...] = arr
