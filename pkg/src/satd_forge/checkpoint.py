"""Model checkpoint container.

Layout: 6-byte magic "SATDF1", a little-endian uint32 header length, a
JSON header (hyper-parameters, vocabularies, seed, declared block order),
then the parameter blocks as little-endian float32 in that order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"SATDF1"


def save_checkpoint(path, kind: str, header: dict, blocks: list[tuple[str, np.ndarray]]):
    header = dict(header)
    header["kind"] = kind
    header["format_version"] = 1
    header["blocks"] = [{"name": name, "shape": list(arr.shape)} for name, arr in blocks]
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(payload)))
        f.write(payload)
        for _, arr in blocks:
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (header, blocks); block arrays come back as float64."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a model checkpoint (bad magic)")
        (header_len,) = struct.unpack("<I", f.read(4))
        try:
            header = json.loads(f.read(header_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: corrupt checkpoint header: {exc}") from exc
        blocks: dict[str, np.ndarray] = {}
        for spec in header.get("blocks", []):
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(4 * count)
            if len(raw) != 4 * count:
                raise CheckpointError(f"{path}: truncated block {spec['name']!r}")
            blocks[spec["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
    return header, blocks
