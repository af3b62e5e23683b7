"""Single-file archive: JSON manifest followed by packed binary blocks.

Layout: 8-byte magic, uint32 little-endian manifest length, UTF-8 JSON
manifest, then the raw blocks back to back in manifest order.  The manifest
records schema version, user metadata and per-block name/dtype/shape.
Dtypes are forced little-endian on disk, so files are byte-stable across
runs and readable on any host.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PFBLK01\n"
SCHEMA_VERSION = 1

_ALLOWED = {"<f8", "<f4", "<i8", "<i4", "|u1"}


def _disk_dtype(arr: np.ndarray) -> str:
    kind = arr.dtype.kind
    if kind == "f":
        return "<f8" if arr.dtype.itemsize == 8 else "<f4"
    if kind == "i":
        return "<i8" if arr.dtype.itemsize == 8 else "<i4"
    if kind in ("u", "b"):
        return "|u1"
    raise ValueError(f"unsupported dtype {arr.dtype}")


def write_container(path: str | Path, meta: dict, blocks: dict[str, np.ndarray]) -> None:
    """Write metadata plus named arrays; overwrites path atomically."""
    entries = []
    payload = []
    for name, arr in blocks.items():
        arr = np.ascontiguousarray(arr)
        dt = _disk_dtype(arr)
        data = arr.astype(dt, copy=False).tobytes()
        entries.append({"name": name, "dtype": dt, "shape": list(arr.shape), "nbytes": len(data)})
        payload.append(data)
    manifest = {"schema": SCHEMA_VERSION, "meta": meta, "blocks": entries}
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for data in payload:
            fh.write(data)
    tmp.replace(path)


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read (meta, blocks); raises ValueError on a malformed file."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a container file (bad magic)")
        (n,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(n).decode("utf-8"))
        if manifest.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema {manifest.get('schema')}")
        blocks: dict[str, np.ndarray] = {}
        for entry in manifest["blocks"]:
            if entry["dtype"] not in _ALLOWED:
                raise ValueError(f"{path}: illegal block dtype {entry['dtype']}")
            raw = fh.read(entry["nbytes"])
            if len(raw) != entry["nbytes"]:
                raise ValueError(f"{path}: truncated block {entry['name']}")
            arr = np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"])
            blocks[entry["name"]] = arr.astype(np.float64) if entry["dtype"] == "<f4" else arr.copy()
    return manifest["meta"], blocks
