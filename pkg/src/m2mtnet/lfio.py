"""Light fields as directories of per-view PGM images, plus config files.

A light-field directory holds one grayscale image per view, named
view_u{u}_v{v}.pgm, with an optional meta.txt of key=value lines (u, v,
bitdepth).  Binary PGM (P5) at 8 or 16 bit is supported; 16-bit samples are
big-endian per the format.  Color PPM (P6) views are accepted on load and
reduced to luma.  Values normalize to [0, 1] as sample/maxval.
"""
from __future__ import annotations

import os
import re

import numpy as np

from .lftensor import LfTensor
from .metrics import rgb_to_y

__all__ = [
    "read_pgm",
    "write_pgm",
    "read_ppm",
    "load_lf_dir",
    "save_lf_dir",
    "central_views",
    "parse_config_file",
]


def _read_netpbm_header(raw: bytes, magic: bytes):
    if raw[:2] != magic:
        raise ValueError(f"bad magic {raw[:2]!r}, expected {magic!r}")
    # header tokens: width, height, maxval; comments run # to end of line
    pos, fields = 2, []
    while len(fields) < 3:
        if pos >= len(raw):
            raise ValueError("truncated header")
        ch = raw[pos : pos + 1]
        if ch == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(raw) and not raw[pos : pos + 1].isspace():
                pos += 1
            fields.append(int(raw[start:pos]))
    return fields[0], fields[1], fields[2], pos + 1  # single whitespace after maxval


def _decode_samples(raw, offset, count, maxval, path):
    if not 0 < maxval < 65536:
        raise ValueError(f"{path}: maxval {maxval} outside [1, 65535]")
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = count * dt.itemsize
    if len(raw) - offset < need:
        raise ValueError(f"{path}: truncated pixel data")
    return np.frombuffer(raw, dtype=dt, count=count, offset=offset)


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Binary PGM -> ((H, W) array of raw samples, maxval)."""
    with open(path, "rb") as f:
        raw = f.read()
    try:
        w, h, maxval, offset = _read_netpbm_header(raw, b"P5")
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from None
    samples = _decode_samples(raw, offset, w * h, maxval, path)
    return samples.reshape(h, w).astype(np.int64), maxval


def write_pgm(path, img01: np.ndarray, maxval: int = 255) -> None:
    """Quantize a [0, 1] (H, W) image to a binary PGM."""
    if not 0 < maxval < 65536:
        raise ValueError(f"maxval {maxval} outside [1, 65535]")
    img = np.asarray(img01, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"write_pgm needs a 2-D image, got ndim {img.ndim}")
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode())
        f.write(q.astype(dt).tobytes())


def read_ppm(path) -> tuple[np.ndarray, int]:
    """Binary PPM -> ((H, W, 3) array of raw samples, maxval)."""
    with open(path, "rb") as f:
        raw = f.read()
    try:
        w, h, maxval, offset = _read_netpbm_header(raw, b"P6")
    except ValueError as e:
        raise ValueError(f"{path}: {e}") from None
    samples = _decode_samples(raw, offset, w * h * 3, maxval, path)
    return samples.reshape(h, w, 3).astype(np.int64), maxval


_VIEW_RE = re.compile(r"^view_u(\d+)_v(\d+)\.(pgm|ppm)$")


def _read_meta(path) -> dict:
    meta = {}
    if os.path.isfile(path):
        for key, val in _parse_kv_lines(path):
            meta[key] = val
    return meta


def load_lf_dir(path, central: int | None = None) -> LfTensor:
    """Load a view directory into a (U, V, W, H, 1) float32 light field.

    The grid is taken from meta.txt when present, else inferred from the
    filenames; every view must exist with identical dims.  central=k keeps
    only the central k x k views.  A .ppm view is reduced to BT.601 luma.
    """
    if not os.path.isdir(path):
        raise ValueError(f"not a directory: {path}")
    found = {}
    for name in os.listdir(path):
        m = _VIEW_RE.match(name)
        if m:
            found[(int(m.group(1)), int(m.group(2)))] = name
    meta = _read_meta(os.path.join(path, "meta.txt"))
    if "u" in meta and "v" in meta:
        nu, nv = int(meta["u"]), int(meta["v"])
    elif found:
        nu = max(k[0] for k in found) + 1
        nv = max(k[1] for k in found) + 1
    else:
        raise ValueError(f"no view_u*_v*.pgm images in {path}")

    views = []
    dims = None
    for uu in range(nu):
        row = []
        for vv in range(nv):
            name = found.get((uu, vv))
            if name is None:
                raise ValueError(f"missing view: view_u{uu}_v{vv}.pgm in {path}")
            full = os.path.join(path, name)
            if name.endswith(".ppm"):
                img, maxval = read_ppm(full)
                y = rgb_to_y(img[..., 0] / maxval, img[..., 1] / maxval, img[..., 2] / maxval)
            else:
                img, maxval = read_pgm(full)
                y = img / maxval
            if dims is None:
                dims = y.shape
            elif y.shape != dims:
                raise ValueError(
                    f"view {name} dims {y.shape} differ from {dims} in {path}"
                )
            # file rows are y, columns are x; store (W, H)
            row.append(y.T[:, :, None])
        views.append(row)
    lf = LfTensor(np.asarray(views, dtype=np.float32))
    if central is not None:
        lf = central_views(lf, central)
    return lf


def central_views(lf: LfTensor, k: int) -> LfTensor:
    """Keep the central k x k angular window."""
    if k < 1 or k > lf.u or k > lf.v:
        raise ValueError(f"central {k} outside the {lf.u}x{lf.v} grid")
    ou, ov = (lf.u - k) // 2, (lf.v - k) // 2
    return LfTensor(np.ascontiguousarray(lf.data[ou : ou + k, ov : ov + k]))


def save_lf_dir(lf: LfTensor, path, maxval: int = 255) -> None:
    """Write per-view PGMs plus meta.txt; single-channel fields only."""
    if lf.c != 1:
        raise ValueError(f"view directories store 1 channel, got {lf.c}")
    os.makedirs(path, exist_ok=True)
    for uu in range(lf.u):
        for vv in range(lf.v):
            write_pgm(
                os.path.join(path, f"view_u{uu}_v{vv}.pgm"),
                lf.data[uu, vv, :, :, 0].T,
                maxval,
            )
    with open(os.path.join(path, "meta.txt"), "w") as f:
        f.write(f"u={lf.u}\nv={lf.v}\nbitdepth={8 if maxval <= 255 else 16}\n")


def _parse_kv_lines(path):
    pairs = []
    with open(path) as f:
        for ln, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value, got {line!r}")
            key, val = line.split("=", 1)
            pairs.append((key.strip(), val.strip()))
    return pairs


def parse_config_file(path, known: dict) -> dict:
    """key=value file -> typed dict; keys outside `known` are errors.

    `known` maps key -> converter (int, float, str, or bool via parse).
    """
    out = {}
    for key, val in _parse_kv_lines(path):
        if key not in known:
            raise ValueError(f"{path}: unknown config key {key!r}")
        conv = known[key]
        if conv is bool:
            low = val.lower()
            if low in ("1", "true", "yes", "on"):
                out[key] = True
            elif low in ("0", "false", "no", "off"):
                out[key] = False
            else:
                raise ValueError(f"{path}: bad boolean {val!r} for {key!r}")
        else:
            try:
                out[key] = conv(val)
            except ValueError:
                raise ValueError(f"{path}: bad value {val!r} for {key!r}") from None
    return out
