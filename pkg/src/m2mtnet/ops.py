"""Differentiable numpy kernels recorded on the autodiff tape.

Every op takes Vars (or raw arrays, lifted to constant Vars), computes its
value eagerly, and registers a vjp closure when any input sits on a tape.
Ops never mutate input arrays.  Dtype follows the inputs: float32 stays
float32, float64 stays float64.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .autodiff import Tape, Var

__all__ = [
    "as_var",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "vabs",
    "square",
    "vsum",
    "vmean",
    "matmul",
    "reshape",
    "transpose",
    "getitem",
    "linear",
    "conv2d",
    "softmax",
    "attention",
    "layer_norm",
    "leaky_relu",
    "gelu",
    "pixel_shuffle",
    "resample_matrix",
    "resize_bicubic",
]


def as_var(x, tape: Tape | None = None) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x), tape)


def _tape_of(*vs: Var) -> Tape | None:
    tape = None
    for v in vs:
        if v.tape is None:
            continue
        if tape is None:
            tape = v.tape
        elif tape is not v.tape:
            raise ValueError("op mixes Vars from two different tapes")
    return tape


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and reduction ops

def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    t = _tape_of(a, b)
    out = Var(a.value + b.value, t)
    if t is not None:
        sa, sb = a.value.shape, b.value.shape
        t.record(out, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))
    return out


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    t = _tape_of(a, b)
    out = Var(a.value - b.value, t)
    if t is not None:
        sa, sb = a.value.shape, b.value.shape
        t.record(out, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))
    return out


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    t = _tape_of(a, b)
    out = Var(a.value * b.value, t)
    if t is not None:
        sa, sb = a.value.shape, b.value.shape
        t.record(
            out,
            (a, b),
            lambda g: (_unbroadcast(g * b.value, sa), _unbroadcast(g * a.value, sb)),
        )
    return out


def neg(a) -> Var:
    a = as_var(a)
    t = _tape_of(a)
    out = Var(-a.value, t)
    if t is not None:
        t.record(out, (a,), lambda g: (-g,))
    return out


def scale(a, c: float) -> Var:
    """Multiply by a python scalar (not differentiated w.r.t. c)."""
    a = as_var(a)
    t = _tape_of(a)
    out = Var(a.value * c, t)
    if t is not None:
        t.record(out, (a,), lambda g: (g * c,))
    return out


def vabs(a) -> Var:
    a = as_var(a)
    t = _tape_of(a)
    out = Var(np.abs(a.value), t)
    if t is not None:
        sgn = np.sign(a.value)
        t.record(out, (a,), lambda g: (g * sgn,))
    return out


def square(a) -> Var:
    a = as_var(a)
    t = _tape_of(a)
    out = Var(a.value * a.value, t)
    if t is not None:
        t.record(out, (a,), lambda g: (g * (2.0 * a.value),))
    return out


def vsum(a, axis=None, keepdims: bool = False) -> Var:
    a = as_var(a)
    t = _tape_of(a)
    out = Var(a.value.sum(axis=axis, keepdims=keepdims), t)
    if t is not None:
        shape = a.value.shape

        def vjp(g):
            if axis is not None and not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                for ax in sorted(a % len(shape) for a in axes):
                    g = np.expand_dims(g, ax)
            return (np.ascontiguousarray(np.broadcast_to(g, shape)),)

        t.record(out, (a,), vjp)
    return out


def vmean(a, axis=None, keepdims: bool = False) -> Var:
    a = as_var(a)
    n = a.value.size if axis is None else np.prod(
        [a.value.shape[ax % a.value.ndim] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return scale(vsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


# ---------------------------------------------------------------------------
# Shape ops

def reshape(a, shape) -> Var:
    a = as_var(a)
    t = _tape_of(a)
    out = Var(a.value.reshape(shape), t)
    if t is not None:
        orig = a.value.shape
        t.record(out, (a,), lambda g: (g.reshape(orig),))
    return out


def transpose(a, axes) -> Var:
    a = as_var(a)
    t = _tape_of(a)
    out = Var(np.ascontiguousarray(np.transpose(a.value, axes)), t)
    if t is not None:
        inv = np.argsort(axes)
        t.record(out, (a,), lambda g: (np.ascontiguousarray(np.transpose(g, inv)),))
    return out


def getitem(a, idx) -> Var:
    """Basic slicing; gradient scatters back into the sliced region."""
    a = as_var(a)
    t = _tape_of(a)
    out = Var(np.ascontiguousarray(a.value[idx]), t)
    if t is not None:
        shape = a.value.shape

        def vjp(g):
            gz = np.zeros(shape, dtype=g.dtype)
            gz[idx] = g
            return (gz,)

        t.record(out, (a,), vjp)
    return out


# ---------------------------------------------------------------------------
# Linear algebra

def matmul(a, b) -> Var:
    """Matrix product with numpy batch broadcasting on leading axes."""
    a, b = as_var(a), as_var(b)
    t = _tape_of(a, b)
    out = Var(a.value @ b.value, t)
    if t is not None:
        av, bv = a.value, b.value

        def vjp(g):
            ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
            gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
            return (ga, gb)

        t.record(out, (a, b), vjp)
    return out


def linear(x, w, b) -> Var:
    """x @ w + b over the last axis: (..., Din) -> (..., Dout)."""
    x, w, b = as_var(x), as_var(w), as_var(b)
    din, dout = w.value.shape
    if x.value.shape[-1] != din:
        raise ValueError(f"linear: input dim {x.value.shape[-1]} != weight Din {din}")
    if b.value.shape != (dout,):
        raise ValueError(f"linear: bias dims {b.value.shape} != ({dout},)")
    t = _tape_of(x, w, b)
    out = Var(x.value @ w.value + b.value, t)
    if t is not None:
        xv, wv = x.value, w.value

        def vjp(g):
            g2 = g.reshape(-1, dout)
            gx = (g @ wv.T).reshape(xv.shape)
            gw = xv.reshape(-1, din).T @ g2
            gb = g2.sum(axis=0)
            return (gx, gw, gb)

        t.record(out, (x, w, b), vjp)
    return out


# ---------------------------------------------------------------------------
# Convolution

def _conv_value(x: np.ndarray, k: np.ndarray, b, pad: int) -> np.ndarray:
    """Shape-preserving cross-correlation, x (B,C,H,W), k (Co,Ci,kh,kw)."""
    bsz, cin, h, w = x.shape
    cout, _, kh, kw = k.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (B, C, H, W, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * h * w, cin * kh * kw)
    y = cols @ k.reshape(cout, -1).T
    if b is not None:
        y = y + b
    return y.reshape(bsz, h, w, cout).transpose(0, 3, 1, 2)


def conv2d(x, kernel, bias) -> Var:
    """2D convolution over (B, C, H, W) or (C, H, W), stride 1, same padding.

    Kernel dims (Cout, Cin, kh, kw) with kh == kw in {1, 3}; padding is
    (kh-1)//2 so spatial dims are preserved.
    """
    x, kernel, bias = as_var(x), as_var(kernel), as_var(bias)
    squeeze = x.value.ndim == 3
    xv = x.value[None] if squeeze else x.value
    if xv.ndim != 4:
        raise ValueError(f"conv2d: input needs (B,C,H,W) or (C,H,W), got ndim {x.value.ndim}")
    cout, cin, kh, kw = kernel.value.shape
    if kh != kw or kh not in (1, 3):
        raise ValueError(f"conv2d: kernel must be square 1x1 or 3x3, got {kh}x{kw}")
    if xv.shape[1] != cin:
        raise ValueError(f"conv2d: input channels {xv.shape[1]} != kernel Cin {cin}")
    if bias.value.shape != (cout,):
        raise ValueError(f"conv2d: bias dims {bias.value.shape} != ({cout},)")
    pad = (kh - 1) // 2
    t = _tape_of(x, kernel, bias)
    y = _conv_value(xv, kernel.value, bias.value, pad)
    out = Var(y[0] if squeeze else y, t)
    if t is not None:
        kv = kernel.value

        def vjp(g):
            gv = g[None] if squeeze else g
            bsz, _, h, w = gv.shape
            g2 = gv.transpose(0, 2, 3, 1).reshape(-1, cout)
            # rebuild im2col patches from the saved input
            xp = np.pad(xv, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
            win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
            cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(-1, cin * kh * kw)
            gk = (g2.T @ cols).reshape(kv.shape)
            gb = g2.sum(axis=0)
            # input grad = correlation with the spatially flipped, channel-swapped kernel
            kt = kv[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            gx = _conv_value(gv, np.ascontiguousarray(kt), None, pad)
            return (gx[0] if squeeze else gx, gk, gb)

        t.record(out, (x, kernel, bias), vjp)
    return out


# ---------------------------------------------------------------------------
# Attention pieces

def softmax(x, axis: int = -1) -> Var:
    """Numerically stable softmax along one axis (max-subtracted)."""
    x = as_var(x)
    t = _tape_of(x)
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Var(y, t)
    if t is not None:
        t.record(
            out,
            (x,),
            lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),),
        )
    return out


def attention(q, k, v) -> Var:
    """Scaled dot-product attention softmax(q kT / sqrt(D)) v.

    q: (..., Tq, D), k: (..., Tk, D), v: (..., Tk, Dv); leading axes batch.
    """
    q, k, v = as_var(q), as_var(k), as_var(v)
    if q.value.shape[-1] != k.value.shape[-1]:
        raise ValueError(
            f"attention: q dim {q.value.shape[-1]} != k dim {k.value.shape[-1]}"
        )
    if k.value.shape[-2] != v.value.shape[-2]:
        raise ValueError(
            f"attention: k rows {k.value.shape[-2]} != v rows {v.value.shape[-2]}"
        )
    d = q.value.shape[-1]
    kt = transpose_last(k)
    scores = scale(matmul(q, kt), 1.0 / float(np.sqrt(d)))
    weights = softmax(scores, axis=-1)
    return matmul(weights, v)


def transpose_last(a) -> Var:
    """Swap the last two axes (batch-aware)."""
    a = as_var(a)
    axes = list(range(a.value.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def layer_norm(x, gain, offset, eps: float = 1e-5) -> Var:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x, gain, offset = as_var(x), as_var(gain), as_var(offset)
    d = x.value.shape[-1]
    if gain.value.shape != (d,) or offset.value.shape != (d,):
        raise ValueError(f"layer_norm: gain/offset must have dims ({d},)")
    t = _tape_of(x, gain, offset)
    mean = x.value.mean(axis=-1, keepdims=True)
    xc = x.value - mean
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Var(xhat * gain.value + offset.value, t)
    if t is not None:
        gv = gain.value

        def vjp(g):
            dxhat = g * gv
            dg = (g * xhat).reshape(-1, d).sum(axis=0)
            db = g.reshape(-1, d).sum(axis=0)
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            dx = inv * (dxhat - m1 - xhat * m2)
            return (dx, dg, db)

        t.record(out, (x, gain, offset), vjp)
    return out


# ---------------------------------------------------------------------------
# Activations

def leaky_relu(x, slope: float = 0.1) -> Var:
    x = as_var(x)
    t = _tape_of(x)
    mask = np.where(x.value > 0, 1.0, slope).astype(x.value.dtype)
    out = Var(x.value * mask, t)
    if t is not None:
        t.record(out, (x,), lambda g: (g * mask,))
    return out


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x) -> Var:
    """Exact Gaussian-error-linear unit 0.5*x*(1 + erf(x/sqrt(2)))."""
    x = as_var(x)
    t = _tape_of(x)
    cdf = 0.5 * (1.0 + erf(x.value * _INV_SQRT2))
    out = Var((x.value * cdf).astype(x.value.dtype, copy=False), t)
    if t is not None:
        xv = x.value
        t.record(
            out,
            (x,),
            lambda g: ((g * (cdf + xv * _INV_SQRT2PI * np.exp(-0.5 * xv * xv))).astype(xv.dtype, copy=False),),
        )
    return out


# ---------------------------------------------------------------------------
# Upsampling

def pixel_shuffle(x, r: int) -> Var:
    """(..., r*r*C, H, W) -> (..., C, r*H, r*W); channel (c*r + dy)*r + dx
    moves to spatial offset (dy, dx).  Built from reshape/transpose, so the
    gradient is the inverse rearrangement automatically.
    """
    x = as_var(x)
    squeeze = x.value.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.value.shape)
    b, c2, h, w = x.value.shape
    c, rem = divmod(c2, r * r)
    if rem != 0:
        raise ValueError(f"pixel_shuffle: channels {c2} not divisible by r*r={r * r}")
    y = reshape(x, (b, c, r, r, h, w))
    y = transpose(y, (0, 1, 4, 2, 5, 3))  # (B, C, H, ry, W, rx)
    y = reshape(y, (b, c, h * r, w * r))
    if squeeze:
        y = reshape(y, y.value.shape[1:])
    return y


def _keys_kernel(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic interpolation kernel (a = -0.5)."""
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    w = np.where(
        t <= 1.0,
        (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0,
        a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a,
    )
    return np.where(t < 2.0, w, 0.0)


_TAP_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _tap_tables(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-output-sample tap indices (n_out, 4) and weights (n_out, 4).

    Center-aligned source mapping src = (i + 0.5) * n_in/n_out - 0.5 with the
    4-tap Keys kernel; out-of-range taps clamp to the edge sample (replicate
    padding).  The second half of the table is the mirrored first half, so
    the map is mirror-symmetric bit-for-bit.
    """
    key = (n_in, n_out)
    cached = _TAP_CACHE.get(key)
    if cached is not None:
        return cached
    idx = np.zeros((n_out, 4), dtype=np.intp)
    wts = np.zeros((n_out, 4), dtype=np.float64)
    ratio = n_in / n_out
    for i in range((n_out + 1) // 2):
        src = (i + 0.5) * ratio - 0.5
        base = int(np.floor(src))
        frac = src - base
        for tap in range(-1, 3):
            idx[i, tap + 1] = min(max(base + tap, 0), n_in - 1)
            wts[i, tap + 1] = float(_keys_kernel(np.float64(frac - tap)))
        idx[n_out - 1 - i] = (n_in - 1) - idx[i, ::-1]
        wts[n_out - 1 - i] = wts[i, ::-1]
    idx.flags.writeable = False
    wts.flags.writeable = False
    _TAP_CACHE[key] = (idx, wts)
    return idx, wts


def resample_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Dense (n_out, n_in) bicubic resampling matrix, float64.

    Rows sum to 1 (constants are preserved) and the matrix equals its own
    180-degree rotation.  resize_bicubic applies the same weights via a tap
    gather; edge samples there keep clamped taps as separate addends, so the
    two agree to rounding, not bit-for-bit.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError("resample_matrix: dims must be >= 1")
    idx, wts = _tap_tables(n_in, n_out)
    m = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        for t in range(4):
            m[i, idx[i, t]] += wts[i, t]
    return m


def _resize_value(x: np.ndarray, hout: int, wout: int) -> np.ndarray:
    """Fused 16-tap bicubic evaluation of the trailing (H, W) axes.

    The 4x4 tap products are summed along a tree whose terms map onto each
    other under flips and transpose with operand swaps only; since a+b and
    a*b are bitwise commutative, the resample commutes with all eight
    dihedral symmetries exactly.
    """
    ih, wh = _tap_tables(x.shape[-2], hout)
    iw, ww = _tap_tables(x.shape[-1], wout)
    wh = wh.astype(x.dtype)
    ww = ww.astype(x.dtype)

    def term(t, s):
        g = x[..., ih[:, t][:, None], iw[None, :, s]]
        return g * (wh[:, t][:, None] * ww[None, :, s])

    s1 = (term(0, 0) + term(3, 3)) + (term(0, 3) + term(3, 0))
    s2 = (term(1, 1) + term(2, 2)) + (term(1, 2) + term(2, 1))
    e = term(0, 1) + term(3, 2)
    f = term(1, 0) + term(2, 3)
    g_ = term(0, 2) + term(3, 1)
    h_ = term(2, 0) + term(1, 3)
    return (s1 + s2) + ((e + f) + (g_ + h_))


def resize_bicubic(x, scale: float) -> Var:
    """Bicubic resample of the trailing (H, W) axes by `scale` (no antialias).

    Output dims round(scale*H) x round(scale*W).  The op is exactly linear
    in x, so the vjp is the transpose resample (via the dense matrices).
    """
    x = as_var(x)
    if x.value.ndim < 2:
        raise ValueError("resize_bicubic: input needs at least (H, W)")
    h, w = x.value.shape[-2:]
    hout, wout = int(round(scale * h)), int(round(scale * w))
    if hout < 1 or wout < 1:
        raise ValueError(f"resize_bicubic: scale {scale} collapses {h}x{w} to zero dims")
    val = _resize_value(x.value, hout, wout)
    t = _tape_of(x)
    out = Var(val, t)
    if t is not None:
        dt = x.value.dtype
        mh = resample_matrix(h, hout).astype(dt)
        mw = resample_matrix(w, wout).astype(dt)
        t.record(out, (x,), lambda g: (mh.T @ g @ mw,))
    return out
