"""Single-pair overfitting loop: enough machinery to prove the gradients and
optimizer drive the loss down, not a full training harness."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .autodiff import Tape, Var
from .lftensor import LfTensor

__all__ = [
    "TrainConfig",
    "AdamState",
    "make_pair",
    "l1_loss",
    "l2_loss",
    "adam_step",
    "train_toy",
    "write_loss_csv",
]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iters: int = 300
    batch: int = 4
    loss: str = "l1"

    def validate(self) -> None:
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must sit in [0, 1)")
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if self.loss not in ("l1", "l2"):
            raise ValueError(f"loss must be 'l1' or 'l2', got {self.loss!r}")


def make_pair(hr: LfTensor, r: int) -> tuple[LfTensor, LfTensor]:
    """Bicubic-downsample hr by r per view into the (lr, hr) training pair."""
    if r < 1:
        raise ValueError(f"downsample factor must be >= 1, got {r}")
    if hr.w % r or hr.h % r:
        raise ValueError(f"view dims {hr.w}x{hr.h} not divisible by r={r}")
    u, v, w, h, c = hr.dims
    imgs = hr.data.transpose(0, 1, 4, 3, 2).reshape(u * v, c, h, w)
    lr = ops.resize_bicubic(Var(imgs), 1.0 / r).value
    lr = lr.reshape(u, v, c, h // r, w // r).transpose(0, 1, 4, 3, 2)
    return LfTensor(np.ascontiguousarray(lr)), hr


def l1_loss(pred: Var, target: np.ndarray) -> Var:
    """Mean absolute error, differentiable w.r.t. pred."""
    return ops.vmean(ops.vabs(ops.sub(pred, Var(np.asarray(target)))))


def l2_loss(pred: Var, target: np.ndarray) -> Var:
    return ops.vmean(ops.square(ops.sub(pred, Var(np.asarray(target)))))


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step counter."""

    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig) -> None:
    """One bias-corrected Adam update, in place.

    Zero gradients leave parameters unchanged (moments only decay).
    """
    state.step += 1
    t = state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"grad dims {g.shape} != param dims {p.shape} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p)
            state.m[name] = m
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1**t)
        vhat = v / (1 - cfg.beta2**t)
        p -= cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)


def train_toy(net, pair: tuple[LfTensor, LfTensor], cfg: TrainConfig) -> list[float]:
    """Overfit net on one (lr, hr) pair; returns the per-iteration loss curve.

    Runs in float64 for numerically clean gradients; net.params are updated
    in place (cast up first if needed).  Non-finite loss aborts with a
    diagnostic rather than continuing silently.
    """
    cfg.validate()
    lr_lf, hr_lf = pair
    for name in list(net.params):
        net.params[name] = net.params[name].astype(np.float64)
    x_const = lr_lf.data.astype(np.float64)
    target = hr_lf.data.astype(np.float64)
    loss_fn = l1_loss if cfg.loss == "l1" else l2_loss
    state = AdamState()
    curve: list[float] = []
    for it in range(cfg.iters):
        tape = Tape()
        pv = net.param_vars(tape)
        out = net.forward_var(Var(x_const), pv)
        loss = loss_fn(out, target)
        val = float(loss.value)
        if not np.isfinite(val):
            raise FloatingPointError(f"loss diverged to {val} at iteration {it}")
        curve.append(val)
        tape.backward(loss, np.float64(1.0))
        grads = {n: pv[n].grad for n in net.params}
        tape.release()
        adam_step(net.params, grads, state, cfg)
    return curve


def write_loss_csv(path, curve: list[float]) -> None:
    lines = ["iter,loss"] + [f"{i},{v:.6g}" for i, v in enumerate(curve)]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
