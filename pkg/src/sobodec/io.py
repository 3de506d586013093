"""SGF1 binary grid-function files and JSON helpers.

SGF1 layout (all little-endian)::

    b"SGF1" | u32 N | u32 M | u32 dims[N] | f64 h
    | mask bitset, row-major, LSB-first within each byte
    | f64 values of the masked cells, row-major, M consecutive values per cell

The format carries no origin. Writers also emit a JSON sidecar
(``<file>.json``) with the origin, domain kind and metadata; readers use it
when present and otherwise center the index box on the coordinate origin.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .grid import GridDomain, GridFunction

MAGIC = b"SGF1"


def encode_sgf1(u: GridFunction) -> bytes:
    dom = u.domain
    head = MAGIC + struct.pack(f"<II{dom.N}Id", dom.N, u.M, *dom.shape, dom.h)
    bits = np.packbits(dom.mask.ravel(), bitorder="little").tobytes()
    cells = u.values[:, dom.mask]  # (M, ncells), row-major cell order
    body = np.ascontiguousarray(cells.T, dtype="<f8").tobytes()
    return head + bits + body


def decode_sgf1(data: bytes, origin=None, kind: str = "custom", meta: dict | None = None) -> GridFunction:
    if data[:4] != MAGIC:
        raise ValueError("not an SGF1 stream")
    off = 4
    N, M = struct.unpack_from("<II", data, off)
    off += 8
    dims = struct.unpack_from(f"<{N}I", data, off)
    off += 4 * N
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    ncell = int(np.prod(dims))
    nbytes = (ncell + 7) // 8
    mask = np.unpackbits(np.frombuffer(data, np.uint8, nbytes, off), count=ncell, bitorder="little").astype(bool)
    mask = mask.reshape(dims)
    off += nbytes
    count = int(mask.sum())
    vals = np.frombuffer(data, "<f8", count * M, off).reshape(count, M).T
    if off + 8 * count * M != len(data):
        raise ValueError("SGF1 stream has trailing or missing bytes")
    if origin is None:
        origin = -0.5 * h * np.asarray(dims, float)
    dom = GridDomain(mask, h, np.asarray(origin, float), kind=kind, meta=dict(meta or {}))
    full = np.zeros((M,) + tuple(dims))
    full[:, mask] = vals
    return GridFunction(dom, full)


def write_sgf1(path: str | Path, u: GridFunction, extra: dict[str, Any] | None = None) -> None:
    """Write ``u`` and its JSON sidecar."""
    path = Path(path)
    path.write_bytes(encode_sgf1(u))
    side = {"origin": u.domain.origin.tolist(), "kind": u.domain.kind, "meta": u.domain.meta}
    if extra:
        side.update(extra)
    write_json(path.with_suffix(path.suffix + ".json"), side)


def read_sgf1(path: str | Path, domain: GridDomain | None = None) -> GridFunction:
    """Read a grid function; reuse ``domain`` when its mask and spacing match."""
    path = Path(path)
    side_path = path.with_suffix(path.suffix + ".json")
    side = json.loads(side_path.read_text()) if side_path.exists() else {}
    u = decode_sgf1(path.read_bytes(), origin=side.get("origin"), kind=side.get("kind", "custom"), meta=side.get("meta"))
    if domain is not None:
        if domain.h != u.domain.h or not np.array_equal(domain.mask, u.domain.mask):
            raise ValueError(f"{path} does not live on the given domain")
        u = GridFunction(domain, u.values)
    return u


def read_sidecar(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    return json.loads(path.with_suffix(path.suffix + ".json").read_text())


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def read_json(path: str | Path) -> Any:
    return json.loads(Path(path).read_text())
