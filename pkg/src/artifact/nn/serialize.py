"""Binary model files.

Layout: magic "AILM" | version u32 LE | header length u32 LE | header JSON |
raw little-endian float32 parameter blobs in the header's declared order.
The header stores architecture, metadata, parameter order/shapes, and a CRC32
checksum of the parameter bytes. Identical models serialize to identical
bytes (header keys are sorted).
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .network import LayerSpec, Model

MAGIC = b"AILM"
VERSION = 1


class ModelFormatError(Exception):
    """Base for malformed model files."""


class BadMagicError(ModelFormatError):
    pass


class VersionMismatchError(ModelFormatError):
    pass


class TruncatedModelError(ModelFormatError):
    pass


class ChecksumMismatchError(ModelFormatError):
    pass


def model_bytes(model: Model) -> bytes:
    order = [name for name, _ in model.named_params()]
    blobs = b"".join(
        np.ascontiguousarray(arr, dtype="<f4").tobytes() for _, arr in model.named_params()
    )
    header = {
        "architecture": [spec.to_dict() for spec in model.specs],
        "metadata": model.metadata,
        "param_order": order,
        "param_shapes": {name: list(arr.shape) for name, arr in model.named_params()},
        "checksum": zlib.crc32(blobs),
        "dtype": "float32",
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<II", VERSION, len(header_bytes)) + header_bytes + blobs


def save_model(model: Model, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(model_bytes(model))


def load_model(path: str | Path) -> Model:
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) < 12:
        raise TruncatedModelError(f"{path}: file too short for header")
    version, header_len = struct.unpack("<II", raw[4:12])
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if len(raw) < 12 + header_len:
        raise TruncatedModelError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TruncatedModelError(f"{path}: unreadable header: {exc}") from exc

    blobs = raw[12 + header_len :]
    specs = [LayerSpec.from_dict(d) for d in header["architecture"]]
    shapes = {name: tuple(s) for name, s in header["param_shapes"].items()}
    expected = sum(int(np.prod(shape)) for shape in shapes.values()) * 4
    if len(blobs) != expected:
        raise TruncatedModelError(
            f"{path}: parameter blob is {len(blobs)} bytes, expected {expected}"
        )
    if zlib.crc32(blobs) != header["checksum"]:
        raise ChecksumMismatchError(f"{path}: parameter checksum mismatch")

    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for name in header["param_order"]:
        count = int(np.prod(shapes[name]))
        arr = np.frombuffer(blobs, dtype="<f4", count=count, offset=offset).reshape(shapes[name])
        arrays[name] = arr.copy()
        offset += count * 4

    per_layer: list[dict[str, np.ndarray]] = [{} for _ in specs]
    for name, arr in arrays.items():
        idx, pname = name.split(".", 1)
        per_layer[int(idx)][pname] = arr
    return Model(specs, per_layer, metadata=header["metadata"])
