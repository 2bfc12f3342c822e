"""Checkpoint container: named parameter arrays in a JSON file.

Arrays are stored as base64-encoded little-endian bytes alongside shape and
dtype, so save -> load -> save round-trips bit-exactly. Every file carries a
format version, arbitrary metadata (resolved run config, model config) and a
content hash over the parameter payload.
"""

import base64
import hashlib
import json

import numpy as np

FORMAT_VERSION = 1


def _le_bytes(arr):
    arr = np.ascontiguousarray(arr)
    if arr.dtype.byteorder == ">":
        arr = arr.astype(arr.dtype.newbyteorder("<"))
    return arr.tobytes()


def params_hash(named_arrays):
    """Content hash over parameter names, shapes, dtypes and raw bytes."""
    h = hashlib.sha256()
    for name in sorted(named_arrays):
        arr = named_arrays[name]
        h.update(name.encode())
        h.update(str(arr.shape).encode())
        h.update(str(arr.dtype).encode())
        h.update(_le_bytes(arr))
    return "sha256:" + h.hexdigest()


def save(path, named_arrays, meta=None):
    """Write parameters plus metadata; returns the content hash."""
    payload = {}
    for name, arr in named_arrays.items():
        arr = np.asarray(arr)
        payload[name] = {
            "shape": list(arr.shape),
            "dtype": str(arr.dtype),
            "data": base64.b64encode(_le_bytes(arr)).decode("ascii"),
        }
    content_hash = params_hash(named_arrays)
    doc = {
        "format_version": FORMAT_VERSION,
        "content_hash": content_hash,
        "meta": meta or {},
        "params": payload,
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")
    return content_hash


def load(path):
    """Read a checkpoint; returns (name -> ndarray, meta dict).

    Arrays come back in their stored dtype; the caller decides whether to
    cast. The payload is verified against the stored content hash.
    """
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"checkpoint {path}: unsupported format_version {version!r}")
    named = {}
    for name, entry in doc["params"].items():
        raw = base64.b64decode(entry["data"])
        dtype = np.dtype(entry["dtype"])
        if dtype.byteorder == ">":
            dtype = dtype.newbyteorder("<")
        arr = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"]).copy()
        named[name] = arr
    if params_hash(named) != doc["content_hash"]:
        raise ValueError(f"checkpoint {path}: content hash mismatch, file is corrupt")
    return named, doc.get("meta", {})


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return "sha256:" + h.hexdigest()
