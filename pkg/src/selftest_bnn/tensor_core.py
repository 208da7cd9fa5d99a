"""Dense and sign-packed tensors plus the XNOR-popcount multiply-accumulate.

Dense tensors are plain ``float32`` numpy arrays.  Binary tensors pack one sign
per bit into little-endian 64-bit words: bit ``j`` of word ``k`` holds element
``64 * k + j``; a set bit means +1, a clear bit -1, and ``sign(0) = +1``.
Padding bits past ``logical_len`` are always zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidShape, ShapeMismatch

WORD_BITS = 64


def n_words(n: int) -> int:
    return (n + WORD_BITS - 1) // WORD_BITS


def sign(x: np.ndarray) -> np.ndarray:
    """Elementwise sign with ``sign(0) = +1``, same dtype as ``x``."""
    x = np.asarray(x)
    return np.where(x >= 0, 1, -1).astype(x.dtype if x.dtype.kind == "f" else np.float32)


@dataclass(frozen=True)
class BitTensor:
    logical_len: int
    words: np.ndarray  # uint64, ceil(logical_len / 64) entries

    def __post_init__(self):
        if self.words.dtype != np.uint64 or self.words.ndim != 1:
            raise InvalidShape("words must be a 1-d uint64 array")
        if len(self.words) != n_words(self.logical_len):
            raise InvalidShape(f"{len(self.words)} words cannot hold {self.logical_len} elements")

    def padding_is_zero(self) -> bool:
        tail = self.logical_len % WORD_BITS
        if tail == 0 or not len(self.words):
            return True
        return int(self.words[-1]) >> tail == 0

    def __eq__(self, other):
        if not isinstance(other, BitTensor):
            return NotImplemented
        return self.logical_len == other.logical_len and np.array_equal(self.words, other.words)


def pack_rows(x: np.ndarray) -> np.ndarray:
    """Pack the signs of each row of a 2-d array into ``(rows, n_words)`` uint64 words."""
    x = np.asarray(x)
    rows, n = x.shape
    bits = np.zeros((rows, n_words(n) * WORD_BITS), dtype=bool)
    bits[:, :n] = x >= 0
    packed = np.packbits(bits, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64, copy=False)


def unpack_rows(words: np.ndarray, n: int, dtype=np.float32) -> np.ndarray:
    """Inverse of :func:`pack_rows`: ±1 values of the first ``n`` bits per row."""
    words = np.ascontiguousarray(words, dtype="<u8")
    bits = np.unpackbits(words.view(np.uint8), axis=1, bitorder="little")[:, :n]
    return (bits.astype(dtype) * 2 - 1).astype(dtype)


def pack_signs(t: np.ndarray) -> BitTensor:
    t = np.asarray(t)
    if t.size == 0:
        raise InvalidShape("cannot pack an empty tensor")
    flat = t.reshape(1, -1)
    return BitTensor(int(t.size), pack_rows(flat)[0])


def unpack_signs(b: BitTensor) -> np.ndarray:
    if b.logical_len == 0:
        return np.zeros(0, dtype=np.float32)
    return unpack_rows(b.words[None, :], b.logical_len)[0]


def _tail_mask(n: int) -> int:
    tail = n % WORD_BITS
    return (1 << tail) - 1 if tail else (1 << WORD_BITS) - 1


def xnor_popcount_dot(a: BitTensor, b: BitTensor) -> int:
    """Sum of ``a_i * b_i`` over the ±1 interpretations of two bit tensors."""
    if a.logical_len != b.logical_len:
        raise ShapeMismatch(f"length {a.logical_len} != {b.logical_len}")
    n = a.logical_len
    if n == 0:
        return 0
    xnor = ~(a.words ^ b.words)
    xnor[-1] &= np.uint64(_tail_mask(n))
    matches = int(np.bitwise_count(xnor).sum(dtype=np.int64))
    return 2 * matches - n


def xnor_popcount_matmul(a_words: np.ndarray, b_words: np.ndarray, n: int, chunk: int = 4096) -> np.ndarray:
    """Binary GEMM: ``out[i, j] = sum_k a[i, k] * b[j, k]`` over ±1 rows of length ``n``.

    Uses ``n - 2 * popcount(a XOR b)``, which equals the masked-XNOR form because
    padding bits are zero in both operands.  Returns int32.
    """
    if a_words.shape[1] != b_words.shape[1]:
        raise ShapeMismatch(f"word counts differ: {a_words.shape[1]} vs {b_words.shape[1]}")
    rows = a_words.shape[0]
    out = np.empty((rows, b_words.shape[0]), dtype=np.int32)
    step = max(1, chunk * 64 // max(1, b_words.shape[0] * b_words.shape[1]))
    for s in range(0, rows, step):
        x = a_words[s:s + step, None, :] ^ b_words[None, :, :]
        out[s:s + step] = n - 2 * np.bitwise_count(x).sum(axis=2, dtype=np.int32)
    return out


def fixed_order_matmul(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``x @ w.T`` in float64, summing over the inner axis in index order.

    Each output element depends only on its own row of ``x``, so results do not
    change with batch size or composition (BLAS kernels give no such promise).
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"cannot multiply {x.shape} by {w.shape}^T")
    out = np.zeros((x.shape[0], w.shape[0]), dtype=np.float64)
    for k in range(x.shape[1]):
        out += x[:, k, None] * w[None, :, k]
    return out


def dense_matvec(w: np.ndarray, x: np.ndarray) -> np.ndarray:
    w = np.asarray(w)
    x = np.asarray(x)
    if w.ndim != 2 or x.ndim != 1:
        raise ShapeMismatch(f"expected rank-2 matrix and rank-1 vector, got {w.shape} and {x.shape}")
    if w.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"inner extents differ: {w.shape} @ {x.shape}")
    return w @ x
