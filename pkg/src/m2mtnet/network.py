"""Light-field super-resolution networks and their weight files.

Two architectures share one head/tail:

* Network — n2 correlation blocks (many-to-many + angular attention), so all
  views inform every output pixel.
* O2OBaseline — same depth budget but per-view spatial transformers only;
  views never mix.  Exists as the contrast case for receptive-field and
  attribution experiments.

Head: n1 per-view 3x3 convs (1->C then C->C), leaky-relu between them.
Tail: 1x1 conv C -> r*r*C, pixel shuffle by r, 3x3 conv C -> 1.  A bicubic
upsample of the input is added as a global residual, so a zero-weight network
degrades exactly to bicubic.
"""
from __future__ import annotations

import struct
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import blocks, ops
from .autodiff import Tape, Var
from .blocks import BlockOptions
from .lftensor import LfTensor

__all__ = [
    "NetConfig",
    "Network",
    "O2OBaseline",
    "build",
    "build_o2o",
    "count_params",
    "count_flops",
    "save_weights",
    "load_weights",
    "load_into",
    "read_manifest",
    "config_from_manifest",
    "net_from_file",
]


@dataclass(frozen=True)
class NetConfig:
    """Architecture hyper-parameters; defaults match the 4x model."""

    u: int = 5
    v: int = 5
    c: int = 48
    c_cor: int = 128
    n1: int = 4
    n2: int = 8
    r: int = 4
    norm: bool = True
    out_proj: bool = True
    ffn: bool = True
    angular_ffn: bool = False
    ffn_ratio: int = 2
    seed: int = 0
    flops_per_mac: int = 2
    arch: str = "m2m"

    def validate(self) -> None:
        if min(self.u, self.v, self.c, self.c_cor) < 1:
            raise ValueError("u, v, c, c_cor must be >= 1")
        if self.n1 < 1:
            raise ValueError(f"n1 must be >= 1, got {self.n1}")
        if self.n2 < 1:
            raise ValueError(f"n2 must be >= 1, got {self.n2}")
        if self.r not in (2, 4):
            raise ValueError(f"upscale factor must be 2 or 4, got {self.r}")
        if self.ffn_ratio < 1:
            raise ValueError(f"ffn_ratio must be >= 1, got {self.ffn_ratio}")
        if self.flops_per_mac not in (1, 2):
            raise ValueError(f"flops_per_mac must be 1 or 2, got {self.flops_per_mac}")
        if self.arch not in ("m2m", "o2o"):
            raise ValueError(f"arch must be 'm2m' or 'o2o', got {self.arch!r}")

    @property
    def options(self) -> BlockOptions:
        return BlockOptions(
            norm=self.norm,
            out_proj=self.out_proj,
            ffn=self.ffn,
            angular_ffn=self.angular_ffn,
            ffn_ratio=self.ffn_ratio,
        )


class _SrNet:
    """Shared head/tail plumbing; subclasses provide the block stack."""

    def __init__(self, cfg: NetConfig, params: "OrderedDict[str, np.ndarray]"):
        self.cfg = cfg
        self.params = params

    # -- parameter bookkeeping -------------------------------------------

    def param_vars(self, tape: Tape | None) -> "OrderedDict[str, Var]":
        return OrderedDict((n, Var(a, tape)) for n, a in self.params.items())

    def num_params(self) -> int:
        return sum(a.size for a in self.params.values())

    def param_subtotal(self, prefix: str) -> int:
        return sum(a.size for n, a in self.params.items() if n.startswith(prefix))

    def astype(self, dtype) -> "_SrNet":
        conv = OrderedDict((n, a.astype(dtype)) for n, a in self.params.items())
        return type(self)(self.cfg, conv)

    # -- forward ----------------------------------------------------------

    def _blocks_forward(self, x: Var, pv, dims) -> Var:
        raise NotImplementedError

    def forward_var(self, x: Var, pv: "OrderedDict[str, Var]") -> Var:
        """Differentiable forward: Var (U,V,W,H,1) -> Var (U,V,rW,rH,1)."""
        cfg = self.cfg
        uu, vv, w, h, cin = x.value.shape
        if (uu, vv) != (cfg.u, cfg.v):
            raise ValueError(f"input grid {uu}x{vv} != configured {cfg.u}x{cfg.v}")
        if cin != 1:
            raise ValueError(f"network expects 1 input channel, got {cin}")
        dims = (cfg.u, cfg.v, w, h, cfg.c)

        img = blocks.lf_to_images(x, (cfg.u, cfg.v, w, h, 1))
        for i in range(cfg.n1):
            img = ops.conv2d(img, pv[f"head.{i}.w"], pv[f"head.{i}.b"])
            if i < cfg.n1 - 1:
                img = ops.leaky_relu(img, 0.1)
        feat = blocks.images_to_lf(img, dims)

        feat = self._blocks_forward(feat, pv, dims)

        img = blocks.lf_to_images(feat, dims)
        img = ops.conv2d(img, pv["tail.expand.w"], pv["tail.expand.b"])
        img = ops.pixel_shuffle(img, cfg.r)
        img = ops.conv2d(img, pv["tail.squeeze.w"], pv["tail.squeeze.b"])
        sr = blocks.images_to_lf(img, (cfg.u, cfg.v, cfg.r * w, cfg.r * h, 1))

        up = ops.resize_bicubic(blocks.lf_to_images(x, (cfg.u, cfg.v, w, h, 1)), float(cfg.r))
        up = blocks.images_to_lf(up, (cfg.u, cfg.v, cfg.r * w, cfg.r * h, 1))
        return ops.add(sr, up)

    def forward(self, lf: LfTensor) -> LfTensor:
        """Plain inference; dtype follows the weights."""
        x = Var(lf.data.astype(next(iter(self.params.values())).dtype, copy=False))
        out = self.forward_var(x, self.param_vars(None))
        return LfTensor(out.value)


class Network(_SrNet):
    """Many-to-many correlation network."""

    def _blocks_forward(self, x: Var, pv, dims) -> Var:
        opts = self.cfg.options
        for j in range(self.cfg.n2):
            pm = _subview(pv, f"block{j}.m2mt.")
            pa = _subview(pv, f"block{j}.ang.")
            x = blocks.correlation_block_forward(x, pm, pa, dims, opts)
        return x


class O2OBaseline(_SrNet):
    """Per-view baseline: identical head/tail, isolated spatial transformers."""

    def _blocks_forward(self, x: Var, pv, dims) -> Var:
        opts = self.cfg.options
        for j in range(self.cfg.n2):
            x = blocks.o2o_spatial_forward(x, _subview(pv, f"block{j}.sp."), dims, opts)
        return x


def _subview(pv, prefix: str) -> dict:
    return {n[len(prefix):]: v for n, v in pv.items() if n.startswith(prefix)}


# ---------------------------------------------------------------------------
# Construction

def _head_tail_params(rng, cfg: NetConfig, dtype):
    p: "OrderedDict[str, np.ndarray]" = OrderedDict()
    cin = 1
    for i in range(cfg.n1):
        w = blocks.glorot_uniform(rng, (cfg.c, cin, 3, 3), cin * 9, cfg.c * 9, dtype)
        p[f"head.{i}.w"] = w
        p[f"head.{i}.b"] = np.zeros(cfg.c, dtype=dtype)
        cin = cfg.c
    return p


def _tail_params(rng, cfg: NetConfig, dtype):
    p: "OrderedDict[str, np.ndarray]" = OrderedDict()
    r2c = cfg.r * cfg.r * cfg.c
    p["tail.expand.w"] = blocks.glorot_uniform(rng, (r2c, cfg.c, 1, 1), cfg.c, r2c, dtype)
    p["tail.expand.b"] = np.zeros(r2c, dtype=dtype)
    p["tail.squeeze.w"] = blocks.glorot_uniform(rng, (1, cfg.c, 3, 3), cfg.c * 9, 9, dtype)
    p["tail.squeeze.b"] = np.zeros(1, dtype=dtype)
    return p


def build(cfg: NetConfig, dtype=np.float32) -> Network:
    """Deterministically initialize a many-to-many network from cfg.seed."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    params = _head_tail_params(rng, cfg, dtype)
    opts = cfg.options
    for j in range(cfg.n2):
        pm = blocks.init_m2mt_params(rng, cfg.u, cfg.v, cfg.c, cfg.c_cor, opts, dtype)
        for n, a in pm.items():
            params[f"block{j}.m2mt.{n}"] = a
        pa = blocks.init_angular_params(rng, cfg.u, cfg.v, cfg.c, opts, dtype)
        for n, a in pa.items():
            params[f"block{j}.ang.{n}"] = a
    params.update(_tail_params(rng, cfg, dtype))
    return Network(cfg, params)


def build_o2o(cfg: NetConfig, dtype=np.float32) -> O2OBaseline:
    """Per-view baseline with the same head/tail and interior switches."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    params = _head_tail_params(rng, cfg, dtype)
    for j in range(cfg.n2):
        ps = blocks.init_o2o_spatial_params(rng, cfg.c, cfg.options, dtype)
        for n, a in ps.items():
            params[f"block{j}.sp.{n}"] = a
    params.update(_tail_params(rng, cfg, dtype))
    return O2OBaseline(cfg, params)


# ---------------------------------------------------------------------------
# Analytic cost model

def count_params(net: _SrNet):
    """Per-tensor parameter counts in registry order, plus the total."""
    rows = [(n, a.size) for n, a in net.params.items()]
    return rows, sum(s for _, s in rows)


def count_flops(cfg: NetConfig, patch: int = 32):
    """Per-layer multiply cost for one (patch x patch per view) forward.

    Counting convention: a conv contributes fpm*Cout*Cin*kh*kw*Hout*Wout per
    view, a linear fpm*Din*Dout per token, attention fpm*T*T*D*2 + 5*T*T per
    instance, where fpm = cfg.flops_per_mac (2 counts multiply+add, 1 counts
    MACs).  Biases, norms, activations, reshapes, pixel shuffle and the
    bicubic residual are not counted.
    """
    cfg.validate()
    if patch < 1:
        raise ValueError("patch must be >= 1")
    fpm = cfg.flops_per_mac
    uv = cfg.u * cfg.v
    t = patch * patch
    c, cc, r = cfg.c, cfg.c_cor, cfg.r

    def conv(cout, cin, k, hw, views=uv):
        return fpm * cout * cin * k * k * hw * views

    def lin(din, dout, tokens):
        return fpm * din * dout * tokens

    def att(tok, d, inst):
        return (fpm * tok * tok * d * 2 + 5 * tok * tok) * inst

    rows: list[tuple[str, int]] = []
    rows.append(("head.0", conv(c, 1, 3, t)))
    for i in range(1, cfg.n1):
        rows.append((f"head.{i}", conv(c, c, 3, t)))

    for j in range(cfg.n2):
        if cfg.arch == "m2m":
            pre = f"block{j}.m2mt"
            rows.append((f"{pre}.pos", 2 * conv(c, c, 3, t)))
            rows.append((f"{pre}.encode", lin(uv * c, cc, t)))
            rows.append((f"{pre}.qkv", 3 * lin(cc, cc, t)))
            rows.append((f"{pre}.attention", att(t, cc, 1)))
            if cfg.out_proj:
                rows.append((f"{pre}.proj", lin(cc, cc, t)))
            if cfg.ffn:
                hidden = cfg.ffn_ratio * cc
                rows.append((f"{pre}.ffn", lin(cc, hidden, t) + lin(hidden, cc, t)))
            rows.append((f"{pre}.decode", lin(cc, uv * c, t)))
            pre = f"block{j}.ang"
            rows.append((f"{pre}.qkv", 3 * lin(c, c, uv * t)))
            rows.append((f"{pre}.attention", att(uv, c, t)))
            if cfg.out_proj:
                rows.append((f"{pre}.proj", lin(c, c, uv * t)))
            if cfg.angular_ffn:
                hidden = cfg.ffn_ratio * c
                rows.append((f"{pre}.ffn", lin(c, hidden, uv * t) + lin(hidden, c, uv * t)))
        else:
            pre = f"block{j}.sp"
            rows.append((f"{pre}.qkv", 3 * lin(c, c, uv * t)))
            rows.append((f"{pre}.attention", att(t, c, uv)))
            if cfg.out_proj:
                rows.append((f"{pre}.proj", lin(c, c, uv * t)))
            if cfg.ffn:
                hidden = cfg.ffn_ratio * c
                rows.append((f"{pre}.ffn", lin(c, hidden, uv * t) + lin(hidden, c, uv * t)))

    rows.append(("tail.expand", conv(r * r * c, c, 1, t)))
    rows.append(("tail.squeeze", conv(1, c, 3, r * r * t)))
    return rows, sum(f for _, f in rows)


# ---------------------------------------------------------------------------
# Weight files: magic "M2MW1", u32 LE manifest byte length, manifest text
# (one line per tensor: name, dtype, dims, payload offset, tab-separated),
# then the packed little-endian payload.

_W_MAGIC = b"M2MW1"
_W_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_W_NAMES = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def save_weights(path, net: _SrNet) -> None:
    lines = []
    payload = bytearray()
    for name, arr in net.params.items():
        dt = np.dtype(arr.dtype)
        if dt not in _W_NAMES:
            raise ValueError(f"weight file stores float32/float64, not {dt}")
        dims = ",".join(str(d) for d in arr.shape)
        lines.append(f"{name}\t{_W_NAMES[dt]}\t{dims}\t{len(payload)}")
        payload += np.ascontiguousarray(arr, dtype=dt.newbyteorder("<")).tobytes()
    manifest = ("\n".join(lines) + "\n").encode()
    with open(path, "wb") as f:
        f.write(_W_MAGIC)
        f.write(struct.pack("<I", len(manifest)))
        f.write(manifest)
        f.write(payload)


def read_manifest(path):
    """Manifest entries [(name, dtype_str, dims_tuple, offset)] in file order."""
    with open(path, "rb") as f:
        magic = f.read(5)
        if magic != _W_MAGIC:
            raise ValueError(f"not a weight file: bad magic {magic!r}")
        (mlen,) = struct.unpack("<I", f.read(4))
        manifest = f.read(mlen).decode()
    entries = []
    for line in manifest.splitlines():
        if not line:
            continue
        name, dts, dims, off = line.split("\t")
        if dts not in _W_DTYPES:
            raise ValueError(f"unknown dtype {dts!r} in weight manifest")
        shape = tuple(int(d) for d in dims.split(",")) if dims else ()
        entries.append((name, dts, shape, int(off)))
    return entries


def load_weights(path) -> "OrderedDict[str, np.ndarray]":
    entries = read_manifest(path)
    with open(path, "rb") as f:
        f.seek(5)
        (mlen,) = struct.unpack("<I", f.read(4))
        f.seek(5 + 4 + mlen)
        payload = f.read()
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, dts, shape, off in entries:
        dt = _W_DTYPES[dts]
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        end = off + count * dt.itemsize
        if end > len(payload):
            raise ValueError(f"weight file truncated at tensor {name!r}")
        out[name] = np.frombuffer(payload, dtype=dt, count=count, offset=off).reshape(shape).copy()
    return out


def load_into(net: _SrNet, path) -> None:
    """Load weights by name; every registry tensor must match in dims."""
    loaded = load_weights(path)
    for name, arr in net.params.items():
        if name not in loaded:
            raise ValueError(f"weight file is missing tensor {name!r}")
        if loaded[name].shape != arr.shape:
            raise ValueError(
                f"tensor {name!r}: file dims {loaded[name].shape} != expected {arr.shape}"
            )
        net.params[name] = loaded[name].astype(arr.dtype, copy=False)


def config_from_manifest(entries, u: int, v: int) -> NetConfig:
    """Reconstruct the architecture from weight-manifest names and dims.

    The weight file stores tensors only, so the angular grid (u, v) must come
    from the input; everything else is implied by layer dims.
    """
    names = {n for n, _, _, _ in entries}
    shapes = {n: shp for n, _, shp, _ in entries}
    if "head.0.w" not in names:
        raise ValueError("weight file has no head.0.w; not a network weight file")
    c = shapes["head.0.w"][0]
    n1 = sum(1 for n in names if n.startswith("head.") and n.endswith(".w"))
    block_ids = {int(n.split(".")[0][5:]) for n in names if n.startswith("block")}
    if not block_ids:
        raise ValueError("weight file has no blocks")
    n2 = max(block_ids) + 1
    arch = "m2m" if any(n.startswith("block0.m2mt.") for n in names) else "o2o"
    if arch == "m2m":
        din, c_cor = shapes["block0.m2mt.encode.w"]
        if din != u * v * c:
            raise ValueError(
                f"encode input dim {din} != U*V*C = {u}*{v}*{c}; wrong --central or grid?"
            )
        ffn = "block0.m2mt.ffn1.w" in names
        angular_ffn = "block0.ang.ffn1.w" in names
        norm = "block0.m2mt.att_norm.g" in names
        out_proj = "block0.m2mt.proj.w" in names
        ffn_ratio = shapes["block0.m2mt.ffn1.w"][1] // c_cor if ffn else 2
    else:
        c_cor = c
        ffn = "block0.sp.ffn1.w" in names
        angular_ffn = False
        norm = "block0.sp.att_norm.g" in names
        out_proj = "block0.sp.proj.w" in names
        ffn_ratio = shapes["block0.sp.ffn1.w"][1] // c if ffn else 2
    r2c = shapes["tail.expand.w"][0]
    r = int(round(np.sqrt(r2c // c)))
    if r * r * c != r2c:
        raise ValueError(f"tail expand dim {r2c} is not r*r*C for C={c}")
    return NetConfig(
        u=u, v=v, c=c, c_cor=c_cor, n1=n1, n2=n2, r=r, norm=norm,
        out_proj=out_proj, ffn=ffn, angular_ffn=angular_ffn,
        ffn_ratio=ffn_ratio, arch=arch,
    )


def net_from_file(path, u: int, v: int, dtype=np.float32):
    """Build the right architecture for a weight file and load it."""
    cfg = config_from_manifest(read_manifest(path), u, v)
    net = build(cfg, dtype) if cfg.arch == "m2m" else build_o2o(cfg, dtype)
    load_into(net, path)
    return net
