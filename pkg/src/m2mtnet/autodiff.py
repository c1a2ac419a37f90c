"""Tape-based reverse-mode differentiation over numpy arrays.

Define-by-run: each differentiable op (see the ops module) computes its value
eagerly and appends a record (output, parents, vjp) to the tape.  backward()
replays the records once in reverse, pushing vector-Jacobian products from
each output's accumulated gradient into its parents.  Fan-out is handled by
addition: a Var consumed twice receives both contributions.

A Var may belong to at most one tape; ops refuse to mix Vars from different
tapes.  Vars created without a tape act as constants — they flow through ops
but record nothing on their own.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

__all__ = ["Var", "Tape", "backward", "gradcheck", "rel_error"]


class Var:
    """A value in the computation: ndarray payload plus gradient slot.

    grad always has the same dims and dtype as value and starts at zeros
    (allocated lazily so constant-only forward passes stay cheap).
    """

    __slots__ = ("value", "_grad", "tape", "node_id")

    def __init__(self, value, tape: Optional["Tape"] = None):
        self.value = np.asarray(value)
        self._grad = None
        self.tape = tape
        self.node_id = tape._register() if tape is not None else None

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, g) -> None:
        g = np.asarray(g)
        if g.shape != self.value.shape:
            raise ValueError(f"grad dims {g.shape} != value dims {self.value.shape}")
        self._grad = g

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self) -> str:
        return f"Var(dims={self.value.shape}, dtype={self.value.dtype}, tape={self.tape is not None})"


class Tape:
    """Ordered record of ops for one forward pass.

    Records are appended in execution order, so every parent Var was created
    before the record that consumes it; replaying in reverse is a valid
    topological order for backpropagation.
    """

    def __init__(self):
        self._next_id = 0
        self._released = False
        # (output Var, tuple of parent Vars, vjp: g_out -> per-parent grads)
        self._records: list[tuple[Var, tuple, Callable]] = []

    def _register(self) -> int:
        nid = self._next_id
        self._next_id += 1
        return nid

    def var(self, value) -> Var:
        """Create a leaf Var on this tape."""
        return Var(value, self)

    def record(self, out: Var, parents: Sequence[Var], vjp: Callable) -> None:
        self._records.append((out, tuple(parents), vjp))

    def __len__(self) -> int:
        return len(self._records)

    def release(self) -> None:
        """Drop all records, breaking the record<->Var reference cycles.

        Call after the last backward() on this tape so per-step graphs free
        by refcount instead of waiting for a full gc pass; the tape cannot
        be replayed afterwards.
        """
        self._records.clear()
        self._released = True

    def backward(self, output: Var, seed) -> None:
        """Accumulate d(seed . output)/d(leaf) into .grad of every reachable Var.

        seed must match output's dims.  Each record's vjp runs exactly once,
        in reverse execution order.
        """
        if output.tape is not self:
            raise ValueError("output does not belong to this tape")
        if self._released:
            raise ValueError("tape was released; records are gone")
        seed = np.asarray(seed, dtype=output.value.dtype)
        if seed.shape != output.value.shape:
            raise ValueError(f"seed dims {seed.shape} != output dims {output.value.shape}")
        output.grad = output.grad + seed
        for out, parents, vjp in reversed(self._records):
            grads = vjp(out.grad)
            for p, g in zip(parents, grads):
                if p is None or g is None:
                    continue
                if g.shape != p.value.shape:
                    raise ValueError(
                        f"vjp produced dims {g.shape} for parent of dims {p.value.shape}"
                    )
                p.grad = p.grad + g


def backward(tape: Tape, output: Var, seed) -> None:
    tape.backward(output, seed)


def rel_error(a: float, n: float) -> float:
    """|a - n| / max(|a|, |n|, 1e-8), the symmetric relative error."""
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def gradcheck(f, point: np.ndarray, eps: float = 1e-5) -> float:
    """Max relative error between taped and central-difference gradients.

    f maps a Var holding an array like `point` to a scalar Var.  The check
    runs in float64 regardless of the input dtype and probes every
    coordinate: numeric = (f(x + eps*e_i) - f(x - eps*e_i)) / (2*eps).
    Non-finite analytic or numeric values raise with the coordinate named.
    """
    point = np.asarray(point, dtype=np.float64)
    tape = Tape()
    x = Var(point.copy(), tape)
    out = f(x)
    if out.value.shape != ():
        raise ValueError(f"gradcheck needs a scalar-valued f, got dims {out.value.shape}")
    tape.backward(out, np.float64(1.0))
    analytic = x.grad
    if not np.all(np.isfinite(analytic)):
        bad = np.argwhere(~np.isfinite(analytic))[0]
        raise FloatingPointError(f"non-finite analytic gradient at index {tuple(bad)}")

    worst = 0.0
    it = np.nditer(point, flags=["multi_index"], order="C")
    for _ in it:
        idx = it.multi_index
        xp = point.copy()
        xp[idx] += eps
        fp = float(f(Var(xp)).value)
        xm = point.copy()
        xm[idx] -= eps
        fm = float(f(Var(xm)).value)
        numeric = (fp - fm) / (2.0 * eps)
        if not np.isfinite(numeric):
            raise FloatingPointError(f"non-finite numeric gradient at index {idx}")
        worst = max(worst, rel_error(float(analytic[idx]), numeric))
    return worst
