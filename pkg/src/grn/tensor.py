"""Dense float64 tensors with reverse-mode differentiation.

Tape-based engine: every operation links its output to an OpRecord holding
the input tensors and an adjoint rule. `backward` linearizes the records
reachable from a scalar loss in topological order and replays them in
reverse, accumulating adjoints. All storage is numpy float64; there is no
broadcasting beyond what the individual ops document, and every shape
mismatch is a hard error.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ContractError, DataError, NumericError

Array = np.ndarray


class Tensor:
    """n-dimensional float64 array, optionally accumulating a gradient.

    `grad`, when populated by `backward`, always has the same shape as
    `data`. Leaf tensors are created directly; non-leaf tensors carry the
    OpRecord that produced them.
    """

    __slots__ = ("data", "requires_grad", "grad", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data: Array = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self.op: OpRecord | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={list(self.shape)}, requires_grad={self.requires_grad})"


class OpRecord:
    """One executed operation: name, input/output tensors, adjoint rule.

    `grad_fn` maps the output adjoint to one adjoint contribution per
    input (None for inputs that take no gradient).
    """

    __slots__ = ("name", "inputs", "output", "grad_fn")

    def __init__(self, name: str, inputs: tuple[Tensor, ...], output: Tensor,
                 grad_fn: Callable[[Array], tuple[Array | None, ...]]):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.grad_fn = grad_fn


_TRACE: list[OpRecord] | None = None


@contextmanager
def trace() -> Iterator[list[OpRecord]]:
    """Collect OpRecords in execution order; used by structural tests."""
    global _TRACE
    outer = _TRACE
    _TRACE = []
    try:
        yield _TRACE
    finally:
        _TRACE = outer


def _emit(name: str, inputs: tuple[Tensor, ...], out_data: Array, grad_fn) -> Tensor:
    out = Tensor(out_data, requires_grad=any(t.requires_grad for t in inputs))
    rec = OpRecord(name, inputs, out, grad_fn)
    out.op = rec
    if _TRACE is not None:
        _TRACE.append(rec)
    return out


class ComputationRecord:
    """Operations reachable from one output, in topological order.

    Each operation appears exactly once and after all producers of its
    inputs; reverse iteration is the adjoint accumulation order.
    """

    def __init__(self, ops: list[OpRecord]):
        self.ops = ops

    @classmethod
    def from_output(cls, t: Tensor) -> "ComputationRecord":
        if t.op is None:
            return cls([])
        visited: set[int] = set()
        order: list[OpRecord] = []
        stack: list[tuple[OpRecord, bool]] = [(t.op, False)]
        while stack:
            rec, expanded = stack.pop()
            if expanded:
                order.append(rec)
                continue
            if id(rec) in visited:
                continue
            visited.add(id(rec))
            stack.append((rec, True))
            for inp in rec.inputs:
                if inp.op is not None and id(inp.op) not in visited:
                    stack.append((inp.op, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.ops)

    def __iter__(self) -> Iterator[OpRecord]:
        return iter(self.ops)

    def index_of(self, t: Tensor) -> int:
        """Position of the operation that produced `t`."""
        for i, rec in enumerate(self.ops):
            if rec.output is t:
                return i
        raise ContractError("tensor was not produced by any recorded operation")


def ancestors(t: Tensor) -> set[int]:
    """ids of every tensor upstream of `t` in the recorded graph."""
    out: set[int] = set()
    stack = [t]
    while stack:
        cur = stack.pop()
        if cur.op is None:
            continue
        for inp in cur.op.inputs:
            if id(inp) not in out:
                out.add(id(inp))
                stack.append(inp)
    return out


def backward(loss: Tensor) -> None:
    """Populate `.grad` on every requires_grad tensor reachable from `loss`."""
    if loss.data.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {list(loss.shape)}")
    record = ComputationRecord.from_output(loss)
    grads: dict[int, Array] = {id(loss): np.ones((), dtype=np.float64)}
    holders: dict[int, Tensor] = {id(loss): loss}
    for rec in reversed(record.ops):
        g = grads.get(id(rec.output))
        if g is None:
            continue
        for inp, contrib in zip(rec.inputs, rec.grad_fn(g)):
            if contrib is None:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
                holders[key] = inp
    for key, t in holders.items():
        if t.requires_grad:
            g = grads[key]
            t.grad = g.copy() if t.grad is None else t.grad + g


def _require_finite(name: str, arr: Array) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name}: input contains non-finite values")


# ---------------------------------------------------------------------------
# elementwise / structural ops


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractError(f"add shapes disagree: {list(a.shape)} vs {list(b.shape)}")
    return _emit("add", (a, b), a.data + b.data, lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractError(f"mul shapes disagree: {list(a.shape)} vs {list(b.shape)}")
    return _emit("mul", (a, b), a.data * b.data,
                 lambda g: (g * b.data, g * a.data))


def smul(a: Tensor, s: float) -> Tensor:
    """Multiply by a python scalar (the scalar takes no gradient)."""
    s = float(s)
    return _emit("smul", (a,), a.data * s, lambda g: (g * s,))


def tsum(a: Tensor) -> Tensor:
    """Sum of all elements, as a rank-0 tensor."""
    shape = a.shape
    return _emit("tsum", (a,), a.data.sum(),
                 lambda g: (np.full(shape, float(g)),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _emit("relu", (a,), np.maximum(a.data, 0.0), lambda g: (g * mask,))


def reshape(t: Tensor, new_shape: Sequence[int]) -> Tensor:
    new_shape = tuple(int(s) for s in new_shape)
    if int(np.prod(new_shape, dtype=np.int64)) != t.data.size:
        raise ContractError(
            f"reshape cannot map {list(t.shape)} ({t.data.size} elements) "
            f"to {list(new_shape)}")
    old_shape = t.shape
    return _emit("reshape", (t,), t.data.reshape(new_shape),
                 lambda g: (g.reshape(old_shape),))


def transpose(t: Tensor) -> Tensor:
    if t.data.ndim != 2:
        raise ContractError(f"transpose expects rank-2, got shape {list(t.shape)}")
    return _emit("transpose", (t,), t.data.T.copy(), lambda g: (g.T,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ContractError(
            f"matmul expects rank-2 operands, got {list(a.shape)} and {list(b.shape)}")
    if a.shape[1] != b.shape[0]:
        raise ContractError(
            f"matmul inner dimensions disagree: {list(a.shape)} x {list(b.shape)}")
    out = a.data @ b.data
    return _emit("matmul", (a, b), out,
                 lambda g: (g @ b.data.T, a.data.T @ g))


def slice_channel(t: Tensor, i: int) -> Tensor:
    """Select slice i along the leading axis of a rank-3 tensor."""
    if t.data.ndim != 3:
        raise ContractError(f"slice_channel expects rank-3, got {list(t.shape)}")
    if not 0 <= i < t.shape[0]:
        raise ContractError(f"channel {i} out of range for {list(t.shape)}")
    def grad_fn(g):
        z = np.zeros(t.shape)
        z[i] = g
        return (z,)
    return _emit("slice_channel", (t,), t.data[i].copy(), grad_fn)


def concat_rows(rows: Sequence[Tensor]) -> Tensor:
    """Stack rank-2 blocks along axis 0."""
    if not rows:
        raise ContractError("concat_rows needs at least one block")
    width = rows[0].shape[1] if rows[0].data.ndim == 2 else None
    for r in rows:
        if r.data.ndim != 2 or r.shape[1] != width:
            raise ContractError(
                f"concat_rows blocks must be rank-2 with equal width, got {list(r.shape)}")
    counts = [r.shape[0] for r in rows]
    def grad_fn(g):
        parts = []
        at = 0
        for n in counts:
            parts.append(g[at:at + n].copy())
            at += n
        return tuple(parts)
    return _emit("concat_rows", tuple(rows),
                 np.concatenate([r.data for r in rows], axis=0), grad_fn)


# ---------------------------------------------------------------------------
# normalization / pooling


def softmax(v: Tensor) -> Tensor:
    """Stable softmax of a rank-1 tensor (max-subtraction)."""
    if v.data.ndim != 1 or v.shape[0] < 1:
        raise ContractError(f"softmax expects a nonempty vector, got {list(v.shape)}")
    _require_finite("softmax", v.data)
    z = v.data - v.data.max()
    e = np.exp(z)
    y = e / e.sum()
    def grad_fn(g):
        dot = float(g @ y)
        return ((g - dot) * y,)
    return _emit("softmax", (v,), y, grad_fn)


def row_softmax(m: Tensor) -> Tensor:
    """Stable softmax applied to each row of a rank-2 tensor."""
    if m.data.ndim != 2 or m.shape[1] < 1:
        raise ContractError(f"row_softmax expects rank-2, got {list(m.shape)}")
    _require_finite("row_softmax", m.data)
    z = m.data - m.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    def grad_fn(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        return ((g - dot) * y,)
    return _emit("row_softmax", (m,), y, grad_fn)


def gap(m: Tensor) -> Tensor:
    """Global average pooling: per-row mean of a rank-2 tensor."""
    if m.data.ndim != 2 or m.shape[1] < 1:
        raise ContractError(f"gap expects rank-2 with >=1 column, got {list(m.shape)}")
    d = m.shape[1]
    shape = m.shape
    return _emit("gap", (m,), m.data.mean(axis=1),
                 lambda g: (np.repeat(g[:, None] / d, shape[1], axis=1),))


def channel_scale(weights: Tensor, t: Tensor) -> Tensor:
    """Scale each leading-axis slice of a rank-3 tensor by one weight."""
    if weights.data.ndim != 1 or t.data.ndim != 3:
        raise ContractError(
            f"channel_scale expects vector and rank-3 tensor, got "
            f"{list(weights.shape)} and {list(t.shape)}")
    if weights.shape[0] != t.shape[0]:
        raise ContractError(
            f"channel_scale dimension mismatch: {list(weights.shape)} vs {list(t.shape)}")
    w = weights.data[:, None, None]
    def grad_fn(g):
        return (g * t.data).sum(axis=(1, 2)), g * w
    return _emit("channel_scale", (weights, t), w * t.data, grad_fn)


def bias_add(t: Tensor, b: Tensor) -> Tensor:
    """Add a per-channel bias to a rank-3 tensor."""
    if t.data.ndim != 3 or b.data.ndim != 1 or b.shape[0] != t.shape[0]:
        raise ContractError(
            f"bias_add dimension mismatch: {list(t.shape)} vs {list(b.shape)}")
    return _emit("bias_add", (t, b), t.data + b.data[:, None, None],
                 lambda g: (g, g.sum(axis=(1, 2))))


# ---------------------------------------------------------------------------
# spatial ops


def conv2d(t: Tensor, kernel: Tensor, stride: int = 1) -> Tensor:
    """3x3 cross-correlation with same-padding 1 and stride 1 or 2.

    Input [cin,H,W], kernel [cout,cin,3,3]; output spatial size is
    ceil(H/stride) x ceil(W/stride).
    """
    if stride not in (1, 2):
        raise ContractError(f"conv2d stride must be 1 or 2, got {stride}")
    if t.data.ndim != 3:
        raise ContractError(f"conv2d input must be rank-3, got {list(t.shape)}")
    if kernel.data.ndim != 4 or kernel.shape[2:] != (3, 3):
        raise ContractError(f"conv2d kernel must be [cout,cin,3,3], got {list(kernel.shape)}")
    cin, H, W = t.shape
    cout, kcin = kernel.shape[0], kernel.shape[1]
    if kcin != cin:
        raise ContractError(
            f"conv2d channel mismatch: input has {cin}, kernel expects {kcin}")
    if H < 3 or W < 3:
        raise ContractError(f"conv2d needs spatial size >= 3, got {H}x{W}")

    pad = 1
    Hp, Wp = H + 2 * pad, W + 2 * pad
    out_h = (Hp - 3) // stride + 1
    out_w = (Wp - 3) // stride + 1
    xp = np.zeros((cin, Hp, Wp))
    xp[:, pad:pad + H, pad:pad + W] = t.data
    cols = np.empty((cin, 3, 3, out_h, out_w))
    for ki in range(3):
        for kj in range(3):
            cols[:, ki, kj] = xp[:, ki:ki + out_h * stride:stride,
                                 kj:kj + out_w * stride:stride]
    cols2 = cols.reshape(cin * 9, out_h * out_w)
    kmat = kernel.data.reshape(cout, cin * 9)
    out = (kmat @ cols2).reshape(cout, out_h, out_w)

    def grad_fn(g):
        gmat = g.reshape(cout, out_h * out_w)
        dk = (gmat @ cols2.T).reshape(cout, cin, 3, 3)
        dcols = (kmat.T @ gmat).reshape(cin, 3, 3, out_h, out_w)
        dxp = np.zeros((cin, Hp, Wp))
        for ki in range(3):
            for kj in range(3):
                dxp[:, ki:ki + out_h * stride:stride,
                    kj:kj + out_w * stride:stride] += dcols[:, ki, kj]
        return dxp[:, pad:pad + H, pad:pad + W].copy(), dk
    return _emit("conv2d", (t, kernel), out, grad_fn)


def upsample_nearest(t: Tensor, factor: int = 2) -> Tensor:
    """Replicate each pixel of a rank-3 tensor into a factor x factor block."""
    if factor != 2:
        raise ContractError(f"upsample_nearest supports factor 2 only, got {factor}")
    if t.data.ndim != 3:
        raise ContractError(f"upsample_nearest expects rank-3, got {list(t.shape)}")
    c, H, W = t.shape
    out = np.repeat(np.repeat(t.data, 2, axis=1), 2, axis=2)
    def grad_fn(g):
        return (g.reshape(c, H, 2, W, 2).sum(axis=(2, 4)),)
    return _emit("upsample_nearest", (t,), out, grad_fn)


def cross_entropy_pixelwise(logits: Tensor, labels: Array) -> Tensor:
    """Mean over pixels of -log softmax(logits) at the integer label."""
    if logits.data.ndim != 3:
        raise ContractError(
            f"cross_entropy_pixelwise expects [c,H,W] logits, got {list(logits.shape)}")
    c, H, W = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (H, W):
        raise ContractError(
            f"label map shape {list(labels.shape)} does not match logits {list(logits.shape)}")
    if labels.dtype.kind not in "iu":
        raise DataError(f"labels must be integers, got dtype {labels.dtype}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise DataError(f"label ids must lie in [0, {c})")
    _require_finite("cross_entropy_pixelwise", logits.data)
    x = logits.data
    m = x.max(axis=0)
    lse = np.log(np.exp(x - m).sum(axis=0)) + m
    picked = np.take_along_axis(x, labels[None], axis=0)[0]
    loss = (lse - picked).mean()
    npix = H * W
    def grad_fn(g):
        d = np.exp(x - lse[None])
        np.put_along_axis(d, labels[None],
                          np.take_along_axis(d, labels[None], 0) - 1.0, 0)
        return (d * (float(g) / npix),)
    return _emit("cross_entropy_pixelwise", (logits,), np.float64(loss), grad_fn)
