"""Dense light-field container, its invertible subspace views, and tensor files.

A 4D light field is stored as one contiguous array with axes (U, V, W, H, C):
angular row u, angular column v, spatial column x, spatial row y, channel.
Flat layout is row-major with the channel axis fastest, so element
(u, v, x, y, ch) lives at offset ((((u*V + v)*W + x)*H + y)*C + ch.

Every view below is a pure axis permutation plus reshape: a bijection on the
stored elements with an exact inverse.  No view changes values, only layout.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LfTensor",
    "to_spatial",
    "from_spatial",
    "to_angular",
    "from_angular",
    "to_epi_h",
    "from_epi_h",
    "to_epi_v",
    "from_epi_v",
    "to_merged",
    "from_merged",
    "to_macpi",
    "macpi_to_lf",
    "read_lft1",
    "write_lft1",
]


@dataclass(frozen=True)
class LfTensor:
    """A light field with axes (U, V, W, H, C), any float dtype.

    U x V is the angular grid of sub-aperture images (SAIs); W x H is the
    spatial extent of each SAI; C is the channel count (1 for luma).
    """

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 5:
            raise ValueError(
                f"light field needs axes (U, V, W, H, C); got ndim={self.data.ndim}"
            )
        if min(self.data.shape) < 1:
            raise ValueError(f"all dims must be >= 1, got {self.data.shape}")

    @property
    def u(self) -> int:
        return self.data.shape[0]

    @property
    def v(self) -> int:
        return self.data.shape[1]

    @property
    def w(self) -> int:
        return self.data.shape[2]

    @property
    def h(self) -> int:
        return self.data.shape[3]

    @property
    def c(self) -> int:
        return self.data.shape[4]

    @property
    def dims(self) -> tuple[int, int, int, int, int]:
        return self.data.shape

    def astype(self, dtype) -> "LfTensor":
        return LfTensor(self.data.astype(dtype))

    def sai(self, u: int, v: int) -> np.ndarray:
        """One sub-aperture image as a (W, H, C) array."""
        return self.data[u, v]


def _check_dims(t: np.ndarray, expect: tuple[int, ...], what: str) -> None:
    if t.shape != expect:
        raise ValueError(f"{what}: expected dims {expect}, got {t.shape}")


# ---------------------------------------------------------------------------
# Subspace views.  Grouping convention for every flattened pair of axes is
# row-major, e.g. the UV token axis enumerates v fastest within u.

def to_spatial(lf: LfTensor) -> np.ndarray:
    """(U*V, W*H, C): one token sequence of W*H pixels per SAI."""
    u, v, w, h, c = lf.dims
    return lf.data.reshape(u * v, w * h, c)


def from_spatial(t: np.ndarray, u: int, v: int, w: int, h: int) -> LfTensor:
    _check_dims(t, (u * v, w * h, t.shape[-1]), "from_spatial")
    return LfTensor(t.reshape(u, v, w, h, t.shape[-1]))


def to_angular(lf: LfTensor) -> np.ndarray:
    """(W*H, U*V, C): one token sequence of U*V views per pixel."""
    u, v, w, h, c = lf.dims
    return lf.data.transpose(2, 3, 0, 1, 4).reshape(w * h, u * v, c)


def from_angular(t: np.ndarray, u: int, v: int, w: int, h: int) -> LfTensor:
    _check_dims(t, (w * h, u * v, t.shape[-1]), "from_angular")
    arr = t.reshape(w, h, u, v, t.shape[-1]).transpose(2, 3, 0, 1, 4)
    return LfTensor(np.ascontiguousarray(arr))


def to_epi_h(lf: LfTensor) -> np.ndarray:
    """(V*H, U*W, C): horizontal epipolar-plane images, (v, y) by (u, x)."""
    u, v, w, h, c = lf.dims
    return lf.data.transpose(1, 3, 0, 2, 4).reshape(v * h, u * w, c)


def from_epi_h(t: np.ndarray, u: int, v: int, w: int, h: int) -> LfTensor:
    _check_dims(t, (v * h, u * w, t.shape[-1]), "from_epi_h")
    arr = t.reshape(v, h, u, w, t.shape[-1]).transpose(2, 0, 3, 1, 4)
    return LfTensor(np.ascontiguousarray(arr))


def to_epi_v(lf: LfTensor) -> np.ndarray:
    """(U*W, V*H, C): vertical epipolar-plane images, (u, x) by (v, y)."""
    u, v, w, h, c = lf.dims
    return lf.data.transpose(0, 2, 1, 3, 4).reshape(u * w, v * h, c)


def from_epi_v(t: np.ndarray, u: int, v: int, w: int, h: int) -> LfTensor:
    _check_dims(t, (u * w, v * h, t.shape[-1]), "from_epi_v")
    arr = t.reshape(u, w, v, h, t.shape[-1]).transpose(0, 2, 1, 3, 4)
    return LfTensor(np.ascontiguousarray(arr))


def to_merged(lf: LfTensor) -> np.ndarray:
    """(1, W*H, U*V*C): all views of a pixel merged into one channel vector.

    The merged channel index is (u*V + v)*C + ch, i.e. SAIs in row-major
    angular order, each contributing its C channels contiguously.
    """
    u, v, w, h, c = lf.dims
    return lf.data.transpose(2, 3, 0, 1, 4).reshape(1, w * h, u * v * c)


def from_merged(t: np.ndarray, u: int, v: int, w: int, h: int) -> LfTensor:
    c, rem = divmod(t.shape[-1], u * v)
    if rem != 0:
        raise ValueError(
            f"from_merged: channel dim {t.shape[-1]} not divisible by U*V={u * v}"
        )
    _check_dims(t, (1, w * h, u * v * c), "from_merged")
    arr = t.reshape(w, h, u, v, c).transpose(2, 3, 0, 1, 4)
    return LfTensor(np.ascontiguousarray(arr))


def to_macpi(lf: LfTensor) -> np.ndarray:
    """(H*U, W*V, C) macro-pixel image: (y, x) macro-grid of U x V patches.

    Row index is y*U + u, column index is x*V + v, so each macro-pixel shows
    all angular samples of one spatial location side by side.
    """
    u, v, w, h, c = lf.dims
    return lf.data.transpose(3, 0, 2, 1, 4).reshape(h * u, w * v, c)


def macpi_to_lf(t: np.ndarray, u: int, v: int, w: int, h: int) -> LfTensor:
    _check_dims(t, (h * u, w * v, t.shape[-1]), "macpi_to_lf")
    arr = t.reshape(h, u, w, v, t.shape[-1]).transpose(1, 3, 2, 0, 4)
    return LfTensor(np.ascontiguousarray(arr))


# ---------------------------------------------------------------------------
# Tensor file format: magic "LFT1", dtype byte (0 = f32, 1 = f64), ndim byte,
# two zero bytes, then ndim u64 little-endian dims, then the row-major
# little-endian payload.

_LFT1_MAGIC = b"LFT1"
_LFT1_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_LFT1_BYCODE = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def write_lft1(path, arr: np.ndarray) -> None:
    """Write an array to an LFT1 tensor file (float32 or float64 only)."""
    dt = np.dtype(arr.dtype)
    if dt not in _LFT1_BYCODE:
        raise ValueError(f"LFT1 stores float32/float64, not {dt}")
    if arr.ndim > 255:
        raise ValueError("LFT1 ndim limit is 255")
    code = _LFT1_BYCODE[dt]
    with open(path, "wb") as f:
        f.write(_LFT1_MAGIC)
        f.write(bytes([code, arr.ndim, 0, 0]))
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        f.write(np.ascontiguousarray(arr, dtype=_LFT1_CODES[code]).tobytes())


def read_lft1(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _LFT1_MAGIC:
        raise ValueError(f"not an LFT1 file: bad magic {raw[:4]!r}")
    code, ndim, z0, z1 = raw[4:8]
    if code not in _LFT1_CODES:
        raise ValueError(f"unknown LFT1 dtype code {code}")
    if (z0, z1) != (0, 0):
        raise ValueError("corrupt LFT1 header: reserved bytes nonzero")
    dims = struct.unpack_from(f"<{ndim}Q", raw, 8)
    dt = _LFT1_CODES[code]
    start = 8 + 8 * ndim
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    expected = start + count * dt.itemsize
    if len(raw) != expected:
        raise ValueError(
            f"truncated LFT1 payload: file has {len(raw)} bytes, header implies {expected}"
        )
    arr = np.frombuffer(raw, dtype=dt, count=count, offset=start)
    return arr.reshape(dims).copy()
