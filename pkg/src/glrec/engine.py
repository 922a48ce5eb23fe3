"""Dense float64 tensors with taped reverse-mode differentiation.

Everything trainable in this package runs on these primitives. The design is
deliberately strict: 64-bit floats only, no implicit broadcasting (the only
exception is scalar * tensor via `scale` / `add_scalar`), and shape mismatches
raise immediately with both shapes in the message. Operations record onto the
innermost active `Tape` whenever an input requires gradients; `backward` walks
the tape in reverse and accumulates gradients into leaf tensors.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform to an operation's contract."""


class Tensor:
    """A dense float64 array plus gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


# ---------------------------------------------------------------------------
# Tape

_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of executed primitives, in topological (execution) order.

    Use as a context manager around a forward pass; `backward(tape, loss)`
    then propagates gradients back to every requires_grad leaf.
    """

    def __init__(self):
        # entries: (output, inputs, backward_fn); backward_fn maps the
        # output gradient to one gradient array per input (None to skip).
        self._entries: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __len__(self) -> int:
        return len(self._entries)

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _TAPES.pop()


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    if _TAPES and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPES[-1]._entries.append((out, inputs, backward_fn))
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    """Reverse-traverse `tape`, accumulating gradients into leaf `.grad`s.

    Multiple uses of a tensor sum their contributions. Gradients of leaves
    (tensors not produced by any entry on this tape) are added into `.grad`,
    so callers must zero grads between steps.
    """
    if loss.data.shape != ():
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
    holders: dict[int, Tensor] = {id(loss): loss}
    for out, inputs, backward_fn in reversed(tape._entries):
        g = grads.pop(id(out), None)
        holders.pop(id(out), None)
        if g is None:
            continue
        contribs = backward_fn(g)
        for inp, gi in zip(inputs, contribs):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
                holders[key] = inp
    for key, g in grads.items():
        t = holders[key]
        t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# Shape checks


def _need_shape(t: Tensor, cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} vs {b.data.shape} must match")


# ---------------------------------------------------------------------------
# Primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _need_shape(a, a.ndim == 2 and b.ndim == 2, f"matmul: need 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims of {a.shape} and {b.shape} differ")
    out = Tensor(a.data @ b.data)

    def back(g):
        return g @ b.data.T, a.data.T @ g

    return _record(out, (a, b), back)


def matvec(a: Tensor, x: Tensor) -> Tensor:
    _need_shape(a, a.ndim == 2 and x.ndim == 1, f"matvec: need (m,n) @ (n,), got {a.shape} and {x.shape}")
    if a.shape[1] != x.shape[0]:
        raise ShapeError(f"matvec: inner dims of {a.shape} and {x.shape} differ")
    out = Tensor(a.data @ x.data)

    def back(g):
        return np.outer(g, x.data), a.data.T @ g

    return _record(out, (a, x), back)


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _record(Tensor(a.data + b.data), (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _record(Tensor(a.data - b.data), (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return _record(Tensor(a.data * b.data), (a, b), lambda g: (g * b.data, g * a.data))


def divide(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "divide")
    out = Tensor(a.data / b.data)

    def back(g):
        return g / b.data, -g * a.data / (b.data * b.data)

    return _record(out, (a, b), back)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar constant (not differentiable w.r.t. c)."""
    c = float(c)
    return _record(Tensor(x.data * c), (x,), lambda g: (g * c,))


def add_scalar(x: Tensor, s: Tensor) -> Tensor:
    """x + s where s is a 0-d tensor; the one sanctioned scalar broadcast."""
    _need_shape(s, s.data.shape == (), f"add_scalar: second operand must be 0-d, got {s.shape}")
    return _record(Tensor(x.data + s.data), (x, s), lambda g: (g, np.sum(g)))


def add_rowvec(x: Tensor, v: Tensor) -> Tensor:
    """Add a length-n vector to every row of an (m, n) matrix."""
    _need_shape(x, x.ndim == 2 and v.ndim == 1, f"add_rowvec: need (m,n) and (n,), got {x.shape} and {v.shape}")
    if x.shape[1] != v.shape[0]:
        raise ShapeError(f"add_rowvec: row width {x.shape} vs vector {v.shape}")
    return _record(Tensor(x.data + v.data[None, :]), (x, v), lambda g: (g, g.sum(axis=0)))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _record(Tensor(np.where(mask, x.data, 0.0)), (x,), lambda g: (g * mask,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only strictly inside the interval."""
    mask = (x.data > lo) & (x.data < hi)
    return _record(Tensor(np.clip(x.data, lo, hi)), (x,), lambda g: (g * mask,))


def clamp_min(x: Tensor, lo: float) -> Tensor:
    mask = x.data > lo
    return _record(Tensor(np.maximum(x.data, lo)), (x,), lambda g: (g * mask,))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ValueError("concat: empty input")
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim:
            raise ShapeError(f"concat: rank mismatch {tensors[0].shape} vs {t.shape}")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return _record(out, tuple(tensors), back)


def gather_rows(x: Tensor, idx) -> Tensor:
    """Select rows (or elements of a 1-d tensor) by integer index array."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows: index must be 1-d, got {idx.shape}")
    if x.ndim not in (1, 2):
        raise ShapeError(f"gather_rows: need 1-d or 2-d input, got {x.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise IndexError(f"gather_rows: index out of range for {x.shape[0]} rows")
    out = Tensor(x.data[idx])

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _record(out, (x,), back)


def transpose(x: Tensor) -> Tensor:
    _need_shape(x, x.ndim == 2, f"transpose: need 2-d input, got {x.shape}")
    return _record(Tensor(x.data.T.copy()), (x,), lambda g: (g.T,))


def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        return _record(Tensor(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.data.shape).copy(),))
    if not (-x.ndim <= axis < x.ndim):
        raise ShapeError(f"sum: axis {axis} invalid for shape {x.shape}")
    ax = axis % x.ndim

    def back(g):
        return (np.broadcast_to(np.expand_dims(g, ax), x.data.shape).copy(),)

    return _record(Tensor(x.data.sum(axis=ax)), (x,), back)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis % x.ndim]
    if n == 0:
        raise ValueError("mean: empty reduction")
    return scale(sum_(x, axis), 1.0 / n)


def sqrt(x: Tensor) -> Tensor:
    out = Tensor(np.sqrt(x.data))
    return _record(out, (x,), lambda g: (g * 0.5 / out.data,))


def log(x: Tensor) -> Tensor:
    return _record(Tensor(np.log(x.data)), (x,), lambda g: (g / x.data,))


def square(x: Tensor) -> Tensor:
    return _record(Tensor(x.data * x.data), (x,), lambda g: (g * 2.0 * x.data,))


def l2_norm(x: Tensor) -> Tensor:
    """Euclidean norm of all entries, floored away from the 0 kink."""
    return sqrt(clamp_min(sum_(square(x)), 1e-300))


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Multiply row i of an (m, n) matrix by s[i]; differentiable in both."""
    _need_shape(x, x.ndim == 2 and s.ndim == 1, f"scale_rows: need (m,n) and (m,), got {x.shape} and {s.shape}")
    if x.shape[0] != s.shape[0]:
        raise ShapeError(f"scale_rows: {x.shape} rows vs scale {s.shape}")
    out = Tensor(x.data * s.data[:, None])

    def back(g):
        return g * s.data[:, None], (g * x.data).sum(axis=1)

    return _record(out, (x, s), back)


def scale_cols(x: Tensor, s: Tensor) -> Tensor:
    """Multiply column j of an (m, n) matrix by s[j]."""
    _need_shape(x, x.ndim == 2 and s.ndim == 1, f"scale_cols: need (m,n) and (n,), got {x.shape} and {s.shape}")
    if x.shape[1] != s.shape[0]:
        raise ShapeError(f"scale_cols: {x.shape} cols vs scale {s.shape}")
    out = Tensor(x.data * s.data[None, :])

    def back(g):
        return g * s.data[None, :], (g * x.data).sum(axis=0)

    return _record(out, (x, s), back)


def outer_add(u: Tensor, v: Tensor) -> Tensor:
    """out[i, j] = u[i] + v[j] for vectors u (m,) and v (n,)."""
    _need_shape(u, u.ndim == 1 and v.ndim == 1, f"outer_add: need two vectors, got {u.shape} and {v.shape}")
    return _record(
        Tensor(u.data[:, None] + v.data[None, :]),
        (u, v),
        lambda g: (g.sum(axis=1), g.sum(axis=0)),
    )


def segment_sum(x: Tensor, seg_ids, num_segments: int) -> Tensor:
    """Sum rows of x into `num_segments` output rows keyed by seg_ids."""
    seg_ids = np.asarray(seg_ids, dtype=np.intp)
    if x.ndim != 2 or seg_ids.ndim != 1 or seg_ids.shape[0] != x.shape[0]:
        raise ShapeError(f"segment_sum: rows {x.shape} vs segment ids {seg_ids.shape}")
    if seg_ids.size and (seg_ids.min() < 0 or seg_ids.max() >= num_segments):
        raise IndexError(f"segment_sum: segment id out of range [0, {num_segments})")
    acc = np.zeros((num_segments, x.shape[1]), dtype=np.float64)
    np.add.at(acc, seg_ids, x.data)
    return _record(Tensor(acc), (x,), lambda g: (g[seg_ids],))


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout: zero with prob p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout: p must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: rng required in training mode with p > 0")
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    return _record(Tensor(x.data * mask), (x,), lambda g: (g * mask,))
