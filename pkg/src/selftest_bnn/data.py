"""IDX image files and synthetic labeled datasets."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidConfig
from .training import Dataset

# IDX type code -> big-endian numpy dtype
IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_CODES = {v.newbyteorder("="): k for k, v in IDX_TYPES.items()}


def parse_idx(buf: bytes) -> np.ndarray:
    """Raw array stored in an IDX byte string."""
    if len(buf) < 4:
        raise FormatError("file shorter than the 4-byte IDX magic")
    if buf[0] != 0 or buf[1] != 0:
        raise FormatError(f"bad magic bytes {buf[:2]!r}")
    code, ndim = buf[2], buf[3]
    if code not in IDX_TYPES:
        raise FormatError(f"unknown IDX type code 0x{code:02x}")
    header = 4 + 4 * ndim
    if len(buf) < header:
        raise FormatError(f"header declares {ndim} dimensions but holds {(len(buf) - 4) // 4}")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    dtype = IDX_TYPES[code]
    need = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    payload = buf[header:]
    if len(payload) < need:
        raise FormatError(f"payload truncated: {len(payload)} of {need} bytes")
    if len(payload) > need:
        raise FormatError(f"{len(payload) - need} trailing bytes after payload")
    return np.frombuffer(payload, dtype=dtype).reshape(dims).astype(dtype.newbyteorder("="))


def load_idx(path: str | Path) -> np.ndarray:
    """Read an IDX file; unsigned-byte images (rank >= 2) come back scaled to [0, 1]."""
    arr = parse_idx(Path(path).read_bytes())
    if arr.dtype == np.uint8 and arr.ndim >= 2:
        return (arr.astype(np.float32) / 255.0).astype(np.float32)
    return arr


def write_idx(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    code = _CODES.get(arr.dtype)
    if code is None:
        raise FormatError(f"dtype {arr.dtype} has no IDX type code")
    head = bytes([0, 0, code, arr.ndim]) + struct.pack(f">{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(head + arr.astype(IDX_TYPES[code]).tobytes())


def load_idx_dataset(images: str | Path, labels: str | Path) -> Dataset:
    x = load_idx(images)
    y = load_idx(labels)
    if x.ndim == 3:
        x = x[:, None]
    if len(x) != len(y):
        raise FormatError(f"{len(x)} images but {len(y)} labels")
    return Dataset(x.astype(np.float32), y.astype(np.int64))


def _balanced_labels(n: int, classes: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n) % classes)


def make_synthetic(kind: str, n: int, classes: int = 2, noise: float = 0.1, seed: int = 0,
                   shape: tuple[int, ...] | None = None) -> Dataset:
    """Deterministic labeled data.

    ``blobs``: Gaussian clusters around random centers (``shape`` sets the
    feature layout, default 2-d points).  ``moons``: two interleaved half
    circles.  ``patterns``: 1x16x16 (or ``shape``) images built from smooth
    per-class templates plus pixel noise, clipped to [0, 1].
    """
    if classes < 1 or n < classes:
        raise InvalidConfig(f"need n >= classes >= 1, got n={n}, classes={classes}")
    if noise < 0:
        raise InvalidConfig("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    y = _balanced_labels(n, classes, rng)
    if kind == "blobs":
        shape = tuple(shape) if shape else (2,)
        d = int(np.prod(shape))
        centers = rng.normal(0.0, 2.0, size=(classes, d))
        x = centers[y] + noise * rng.normal(size=(n, d))
        return Dataset(x.reshape((n,) + shape).astype(np.float32), y)
    if kind == "moons":
        if classes != 2:
            raise InvalidConfig("moons has exactly two classes")
        t = rng.uniform(0, np.pi, size=n)
        x = np.where(y[:, None] == 0,
                     np.stack([np.cos(t), np.sin(t)], axis=1),
                     np.stack([1 - np.cos(t), 0.5 - np.sin(t)], axis=1))
        x = x + noise * rng.normal(size=x.shape)
        return Dataset(x.astype(np.float32), y)
    if kind == "patterns":
        shape = tuple(shape) if shape else (1, 16, 16)
        c, h, w = shape
        coarse = rng.uniform(0.0, 1.0, size=(classes, c, (h + 3) // 4, (w + 3) // 4))
        templates = np.kron(coarse, np.ones((1, 1, 4, 4)))[:, :, :h, :w]
        x = templates[y] + noise * rng.normal(size=(n, c, h, w))
        return Dataset(np.clip(x, 0.0, 1.0).astype(np.float32), y)
    raise InvalidConfig(f"unknown synthetic kind {kind!r}")
