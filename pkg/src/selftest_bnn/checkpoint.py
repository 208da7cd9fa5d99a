"""Portable binary checkpoints.

Layout (all integers little-endian)::

    magic    8 bytes  b"SBNNCKPT"
    version  u16
    reserved u16      zero
    length   u64      payload bytes
    crc32    u32      of the payload
    payload:
      header_len u32, header JSON (utf-8, sorted keys)
      tensor bytes, concatenated in header order

The JSON header carries the architecture descriptor, metadata and a table of
``{name, dtype, shape, offset, nbytes}``.  Tensors are stored as ``<f4``,
``<f8`` or ``<u8`` (packed binary views, named ``<layer>.packed``).
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import CorruptCheckpoint, FormatError, UnsupportedVersion, WriteError
from .nn import Conv2d, DualHeadModel, Linear

MAGIC = b"SBNNCKPT"
VERSION = 1
_PREFIX = struct.Struct("<8sHHQI")
_DTYPES = {"float32": "<f4", "float64": "<f8", "uint64": "<u8"}


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _tensors(m: DualHeadModel) -> list[tuple[str, np.ndarray]]:
    out = list(m.named_parameters())
    if m.deployed:
        for name, layer in m.named_layers():
            if isinstance(layer, (Linear, Conv2d)) and layer.binary:
                out.append((f"{name}.packed", layer.packed))
    return out


def encode_checkpoint(m: DualHeadModel, metadata: dict | None = None) -> bytes:
    table, blobs, offset = [], [], 0
    for name, arr in _tensors(m):
        code = _DTYPES.get(arr.dtype.name)
        if code is None:
            raise FormatError(f"{name}: dtype {arr.dtype} cannot be stored")
        raw = np.ascontiguousarray(arr, dtype=code).tobytes()
        table.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "architecture": m.describe(),
        "deployed": m.deployed,
        "stage1_done": m.stage1_done,
        "metadata": {**m.metadata, **(metadata or {})},
        "tensors": table,
    }
    hb = json.dumps(header, sort_keys=True).encode()
    payload = struct.pack("<I", len(hb)) + hb + b"".join(blobs)
    return _PREFIX.pack(MAGIC, VERSION, 0, len(payload), zlib.crc32(payload)) + payload


def decode_checkpoint(buf: bytes) -> DualHeadModel:
    if len(buf) < _PREFIX.size:
        raise FormatError("checkpoint is shorter than its fixed header")
    magic, version, _, length, crc = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    if version != VERSION:
        raise UnsupportedVersion(f"checkpoint version {version}, this build reads {VERSION}")
    payload = buf[_PREFIX.size:]
    if len(payload) != length or zlib.crc32(payload) != crc:
        raise CorruptCheckpoint("checksum or length mismatch")
    (hlen,) = struct.unpack_from("<I", payload)
    header = json.loads(payload[4:4 + hlen])
    data = payload[4 + hlen:]
    m = DualHeadModel.from_description(header["architecture"])
    m.metadata = header["metadata"]
    m.stage1_done = header["stage1_done"]
    params = m.parameter_dict()
    packed = {}
    for t in header["tensors"]:
        arr = np.frombuffer(data, dtype=t["dtype"], count=int(np.prod(t["shape"])), offset=t["offset"])
        arr = arr.reshape(t["shape"]).astype(np.dtype(t["dtype"]).newbyteorder("="))
        if t["name"].endswith(".packed"):
            packed[t["name"][:-len(".packed")]] = arr
        elif t["name"] in params:
            params[t["name"]] = arr
        else:
            raise CorruptCheckpoint(f"unknown tensor {t['name']}")
    missing = set(m.parameter_dict()) - {t["name"] for t in header["tensors"]}
    if missing:
        raise CorruptCheckpoint(f"missing tensors: {sorted(missing)}")
    for name, layer in m.named_layers():
        for pname in layer.params:
            layer.params[pname] = params[f"{name}.{pname}"]
    if header["deployed"]:
        m.deploy()
        for name, layer in m.named_layers():
            if isinstance(layer, (Linear, Conv2d)) and layer.binary:
                stored = packed.get(name)
                if stored is None or not np.array_equal(stored, layer.packed):
                    raise CorruptCheckpoint(f"{name}: packed view disagrees with its weights")
    return m


def save_checkpoint(m: DualHeadModel, path, metadata: dict | None = None) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(m, metadata))
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> DualHeadModel:
    return decode_checkpoint(Path(path).read_bytes())


def stored_parameter_count(path) -> int:
    """Element count of the real parameters stored in a checkpoint file."""
    buf = Path(path).read_bytes()
    (hlen,) = struct.unpack_from("<I", buf, _PREFIX.size)
    header = json.loads(buf[_PREFIX.size + 4:_PREFIX.size + 4 + hlen])
    return sum(int(np.prod(t["shape"])) for t in header["tensors"] if not t["name"].endswith(".packed"))
