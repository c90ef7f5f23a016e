"""Single-file checkpoint: one JSON manifest line, raw float32 payload, CRC64 trailer.

Layout::

    {"config": {...}, "format": "softs-ckpt-v1", "params": [{"name":..., "shape": [...]}, ...], ...}\\n
    <little-endian float32 arrays concatenated in manifest order>
    <8-byte little-endian CRC-64/XZ of the payload>
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError
from .model import ModelConfig, SoftsModel

FORMAT = "softs-ckpt-v1"

_CRC64_POLY = 0xC96C5795D7870F42  # ECMA-182, reflected
_MASK = 0xFFFFFFFFFFFFFFFF


def _make_table() -> list[int]:
    table = []
    for i in range(256):
        c = i
        for _ in range(8):
            c = (c >> 1) ^ _CRC64_POLY if c & 1 else c >> 1
        table.append(c)
    return table


_TABLE = _make_table()


def crc64(data: bytes, crc: int = 0) -> int:
    """CRC-64/XZ (a.k.a. CRC-64/GO-ECMA)."""
    table = _TABLE
    c = crc ^ _MASK
    for b in data:
        c = table[(c ^ b) & 0xFF] ^ (c >> 8)
    return c ^ _MASK


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def encode(model: SoftsModel, extra: dict | None = None) -> bytes:
    params = [(name, p.data) for name, p in model.named_parameters()]
    manifest = {
        "format": FORMAT,
        "config": model.config.to_dict(),
        "params": [{"name": n, "shape": list(a.shape)} for n, a in params],
    }
    if extra:
        manifest["extra"] = extra
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in params)
    return _dumps(manifest).encode("utf-8") + b"\n" + payload + struct.pack("<Q", crc64(payload))


def decode(blob: bytes) -> tuple[SoftsModel, dict]:
    """Return ``(model, manifest)``; raises CheckpointError on any inconsistency."""
    nl = blob.find(b"\n")
    if nl < 0:
        raise CheckpointError("missing manifest line")
    try:
        manifest = json.loads(blob[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from None
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise CheckpointError(f"not a {FORMAT} file")
    body = blob[nl + 1 :]
    if len(body) < 8:
        raise CheckpointError("truncated checkpoint")
    payload, trailer = body[:-8], body[-8:]
    expected = sum(4 * int(np.prod(e["shape"], dtype=np.int64)) for e in manifest["params"])
    if len(payload) != expected:
        raise CheckpointError(f"payload is {len(payload)} bytes, manifest describes {expected}")
    (stored,) = struct.unpack("<Q", trailer)
    if crc64(payload) != stored:
        raise CheckpointError("CRC mismatch: checkpoint is corrupted")
    try:
        model = SoftsModel(ModelConfig(**manifest["config"]))
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"invalid model config in manifest: {exc}") from None
    state = {}
    offset = 0
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        state[entry["name"]] = np.frombuffer(payload, dtype="<f4", count=n, offset=offset).reshape(shape)
        offset += 4 * n
    order = [name for name, _ in model.named_parameters()]
    if order != [e["name"] for e in manifest["params"]]:
        raise CheckpointError("parameter manifest does not match the model layout")
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(str(exc)) from None
    return model, manifest


def atomic_write(path, data: bytes | str) -> None:
    """Write to a sibling temp file and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def save(path, model: SoftsModel, extra: dict | None = None) -> None:
    atomic_write(path, encode(model, extra))


def load(path) -> tuple[SoftsModel, dict]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"{path}: cannot read ({exc.strerror})") from None
    return decode(blob)
