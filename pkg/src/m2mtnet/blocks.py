"""Correlation blocks: many-to-many spatial attention plus angular attention.

The many-to-many sub-block merges every view of each pixel into one channel
vector (W*H tokens of dim U*V*C), linearly encodes that vector into a
correlation space of dim C_Cor, runs spatial self-attention there, and
decodes back — so each output pixel of each view attends to *all* pixels of
*all* views.  A per-view baseline with the same head/tail (see network) keeps
views isolated instead; the contrast between the two is the point.

The angular sub-block complements it: per spatial location, the U*V views
form the token sequence and attention mixes them at channel dim C.

All forwards here operate on a Var holding the raw (U, V, W, H, C) array and
a flat name->Var parameter mapping; the network module owns parameter
storage and prefixes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import Var

__all__ = [
    "BlockOptions",
    "glorot_uniform",
    "init_m2mt_params",
    "init_angular_params",
    "init_o2o_spatial_params",
    "correlation_encode",
    "spatial_self_attention",
    "correlation_decode",
    "m2mt_forward",
    "angular_forward",
    "correlation_block_forward",
    "o2o_spatial_forward",
]


@dataclass(frozen=True)
class BlockOptions:
    """Interior switches shared by both sub-block types.

    Defaults: pre-norm on, output projection on, feed-forward (expansion 2)
    on the correlation path but off on the angular path.
    """

    norm: bool = True
    out_proj: bool = True
    ffn: bool = True
    angular_ffn: bool = False
    ffn_ratio: int = 2


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype):
    """Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


def _linear_params(rng, din, dout, dtype):
    w = glorot_uniform(rng, (din, dout), din, dout, dtype)
    return w, np.zeros(dout, dtype=dtype)


def _conv_params(rng, cout, cin, k, dtype):
    fan = cin * k * k, cout * k * k
    w = glorot_uniform(rng, (cout, cin, k, k), fan[0], fan[1], dtype)
    return w, np.zeros(cout, dtype=dtype)


def _norm_params(d, dtype):
    # gain 1 / offset 0 so an untrained norm is shape-preserving
    return np.ones(d, dtype=dtype), np.zeros(d, dtype=dtype)


def init_m2mt_params(rng, u, v, c, c_cor, opts: BlockOptions, dtype=np.float32):
    """Parameter arrays for one many-to-many sub-block, in registry order."""
    p: dict[str, np.ndarray] = {}
    p["pos1.w"], p["pos1.b"] = _conv_params(rng, c, c, 3, dtype)
    p["pos2.w"], p["pos2.b"] = _conv_params(rng, c, c, 3, dtype)
    p["encode.w"], p["encode.b"] = _linear_params(rng, u * v * c, c_cor, dtype)
    if opts.norm:
        p["att_norm.g"], p["att_norm.b"] = _norm_params(c_cor, dtype)
    for name in ("q", "k", "v"):
        p[f"{name}.w"], p[f"{name}.b"] = _linear_params(rng, c_cor, c_cor, dtype)
    if opts.out_proj:
        p["proj.w"], p["proj.b"] = _linear_params(rng, c_cor, c_cor, dtype)
    if opts.ffn:
        if opts.norm:
            p["ffn_norm.g"], p["ffn_norm.b"] = _norm_params(c_cor, dtype)
        hidden = opts.ffn_ratio * c_cor
        p["ffn1.w"], p["ffn1.b"] = _linear_params(rng, c_cor, hidden, dtype)
        p["ffn2.w"], p["ffn2.b"] = _linear_params(rng, hidden, c_cor, dtype)
    p["decode.w"], p["decode.b"] = _linear_params(rng, c_cor, u * v * c, dtype)
    return p


def init_angular_params(rng, u, v, c, opts: BlockOptions, dtype=np.float32):
    """Parameter arrays for one angular sub-block."""
    p: dict[str, np.ndarray] = {}
    p["pos_embed"] = glorot_uniform(rng, (u * v, c), u * v, c, dtype)
    if opts.norm:
        p["att_norm.g"], p["att_norm.b"] = _norm_params(c, dtype)
    for name in ("q", "k", "v"):
        p[f"{name}.w"], p[f"{name}.b"] = _linear_params(rng, c, c, dtype)
    if opts.out_proj:
        p["proj.w"], p["proj.b"] = _linear_params(rng, c, c, dtype)
    if opts.angular_ffn:
        if opts.norm:
            p["ffn_norm.g"], p["ffn_norm.b"] = _norm_params(c, dtype)
        hidden = opts.ffn_ratio * c
        p["ffn1.w"], p["ffn1.b"] = _linear_params(rng, c, hidden, dtype)
        p["ffn2.w"], p["ffn2.b"] = _linear_params(rng, hidden, c, dtype)
    return p


def init_o2o_spatial_params(rng, c, opts: BlockOptions, dtype=np.float32):
    """Parameter arrays for one per-view spatial transformer (baseline)."""
    p: dict[str, np.ndarray] = {}
    if opts.norm:
        p["att_norm.g"], p["att_norm.b"] = _norm_params(c, dtype)
    for name in ("q", "k", "v"):
        p[f"{name}.w"], p[f"{name}.b"] = _linear_params(rng, c, c, dtype)
    if opts.out_proj:
        p["proj.w"], p["proj.b"] = _linear_params(rng, c, c, dtype)
    if opts.ffn:
        if opts.norm:
            p["ffn_norm.g"], p["ffn_norm.b"] = _norm_params(c, dtype)
        hidden = opts.ffn_ratio * c
        p["ffn1.w"], p["ffn1.b"] = _linear_params(rng, c, hidden, dtype)
        p["ffn2.w"], p["ffn2.b"] = _linear_params(rng, hidden, c, dtype)
    return p


# ---------------------------------------------------------------------------
# Layout helpers on Vars.  dims is always (u, v, w, h, c).

def lf_to_merged(x: Var, dims) -> Var:
    """(U,V,W,H,C) -> (W*H, U*V*C): pixel tokens carrying all views."""
    u, v, w, h, c = dims
    m = ops.transpose(x, (2, 3, 0, 1, 4))
    return ops.reshape(m, (w * h, u * v * c))


def merged_to_lf(x: Var, dims) -> Var:
    u, v, w, h, c = dims
    m = ops.reshape(x, (w, h, u, v, c))
    return ops.transpose(m, (2, 3, 0, 1, 4))


def lf_to_images(x: Var, dims) -> Var:
    """(U,V,W,H,C) -> (U*V, C, H, W) channel-first image batch for convs."""
    u, v, w, h, c = dims
    m = ops.transpose(x, (0, 1, 4, 3, 2))
    return ops.reshape(m, (u * v, c, h, w))


def images_to_lf(x: Var, dims) -> Var:
    u, v, w, h, c = dims
    m = ops.reshape(x, (u, v, c, h, w))
    return ops.transpose(m, (0, 1, 4, 3, 2))


# ---------------------------------------------------------------------------
# Sub-block pieces

def correlation_encode(x: Var, p: dict, dims) -> Var:
    """Merge views into channels and project to correlation space.

    x: Var (U,V,W,H,C) -> Var (W*H, C_Cor).
    """
    return ops.linear(lf_to_merged(x, dims), p["encode.w"], p["encode.b"])


def spatial_self_attention(i_cor: Var, p: dict, opts: BlockOptions) -> Var:
    """Self-attention over pixel tokens in correlation space, residual added.

    Pre-norm when configured: attention reads the normalized stream, the
    residual adds to the raw stream.
    """
    a_in = (
        ops.layer_norm(i_cor, p["att_norm.g"], p["att_norm.b"])
        if opts.norm
        else i_cor
    )
    att = ops.attention(
        ops.linear(a_in, p["q.w"], p["q.b"]),
        ops.linear(a_in, p["k.w"], p["k.b"]),
        ops.linear(a_in, p["v.w"], p["v.b"]),
    )
    if opts.out_proj:
        att = ops.linear(att, p["proj.w"], p["proj.b"])
    return ops.add(i_cor, att)


def _ffn(x: Var, p: dict, opts: BlockOptions) -> Var:
    f_in = ops.layer_norm(x, p["ffn_norm.g"], p["ffn_norm.b"]) if opts.norm else x
    f = ops.linear(f_in, p["ffn1.w"], p["ffn1.b"])
    f = ops.gelu(f)
    f = ops.linear(f, p["ffn2.w"], p["ffn2.b"])
    return ops.add(x, f)


def correlation_decode(i_cor: Var, p: dict, dims) -> Var:
    """Project correlation tokens back to per-view channels, (U,V,W,H,C)."""
    dec = ops.linear(i_cor, p["decode.w"], p["decode.b"])
    return merged_to_lf(dec, dims)


def m2mt_forward(x: Var, p: dict, dims, opts: BlockOptions) -> Var:
    """One many-to-many sub-block over a light field Var.

    Two per-view 3x3 convs inject spatial position, then
    encode -> attention(+residual) -> feed-forward(+residual, per config)
    -> decode, with the decoded field added back to the conv-enriched input.
    With zero weights the whole sub-block is the identity.
    """
    pos = ops.conv2d(lf_to_images(x, dims), p["pos1.w"], p["pos1.b"])
    pos = ops.conv2d(pos, p["pos2.w"], p["pos2.b"])
    base = ops.add(x, images_to_lf(pos, dims))
    i_cor = correlation_encode(base, p, dims)
    i_cor = spatial_self_attention(i_cor, p, opts)
    if opts.ffn:
        i_cor = _ffn(i_cor, p, opts)
    return ops.add(base, correlation_decode(i_cor, p, dims))


def angular_forward(x: Var, p: dict, dims, opts: BlockOptions) -> Var:
    """One angular sub-block: per-pixel attention across the U*V views.

    Tokens are the views of one spatial location (dim C), batched over all
    W*H locations; a learned per-view embedding marks angular position.
    """
    u, v, w, h, c = dims
    t = ops.transpose(x, (2, 3, 0, 1, 4))
    t = ops.reshape(t, (w * h, u * v, c))
    t = ops.add(t, p["pos_embed"])
    a_in = ops.layer_norm(t, p["att_norm.g"], p["att_norm.b"]) if opts.norm else t
    att = ops.attention(
        ops.linear(a_in, p["q.w"], p["q.b"]),
        ops.linear(a_in, p["k.w"], p["k.b"]),
        ops.linear(a_in, p["v.w"], p["v.b"]),
    )
    if opts.out_proj:
        att = ops.linear(att, p["proj.w"], p["proj.b"])
    t = ops.add(t, att)
    if opts.angular_ffn:
        t = _ffn(t, p, opts)
    t = ops.reshape(t, (w, h, u, v, c))
    return ops.transpose(t, (2, 3, 0, 1, 4))


def correlation_block_forward(
    x: Var, pm: dict, pa: dict, dims, opts: BlockOptions
) -> Var:
    """Many-to-many sub-block, then angular sub-block, plus an outer skip."""
    y = m2mt_forward(x, pm, dims, opts)
    y = angular_forward(y, pa, dims, opts)
    return ops.add(y, x)


def o2o_spatial_forward(x: Var, p: dict, dims, opts: BlockOptions) -> Var:
    """Per-view spatial transformer: attention over W*H pixel tokens at dim C,
    each view processed independently (batched over U*V)."""
    u, v, w, h, c = dims
    t = ops.reshape(x, (u * v, w * h, c))
    a_in = ops.layer_norm(t, p["att_norm.g"], p["att_norm.b"]) if opts.norm else t
    att = ops.attention(
        ops.linear(a_in, p["q.w"], p["q.b"]),
        ops.linear(a_in, p["k.w"], p["k.b"]),
        ops.linear(a_in, p["v.w"], p["v.b"]),
    )
    if opts.out_proj:
        att = ops.linear(att, p["proj.w"], p["proj.b"])
    t = ops.add(t, att)
    if opts.ffn:
        t = _ffn(t, p, opts)
    return ops.reshape(t, (u, v, w, h, c))
