"""Reverse-mode automatic differentiation over dense float64 arrays.

The engine is deliberately small: a Tensor wraps a numpy array, a Tape
records every gradient-relevant operation in execution order, and
``Tape.backward`` replays the records in reverse, accumulating vector-
Jacobian products into a per-tensor gradient map.  All arithmetic is
64-bit; checkpoints downcast separately.
"""

from __future__ import annotations

from typing import Callable, Iterable, Mapping, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes do not conform to the requested operation."""


class NumericError(ArithmeticError):
    """A forward value or a gradient became NaN or infinite."""


class Tensor:
    """Dense float64 value, optionally tracked for gradients.

    Tensor data is treated as immutable while a tape is alive; optimizers
    rewrite ``data`` in place only between tape runs.
    """

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # exp(-|x|) never overflows, and the two branches are exact at the
    # saturated ends (sigmoid(-1000) == 0.0, sigmoid(1000) == 1.0).
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Plain (non-differentiated) row softmax with max-shift stabilisation."""
    z = np.asarray(logits, dtype=np.float64)
    one_dim = z.ndim == 1
    if one_dim:
        z = z[None, :]
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if one_dim else p


class Tape:
    """Execution log for one forward pass plus its reverse sweep.

    Only operations whose output depends on a gradient-tracked tensor are
    recorded.  ``Tape(record=False)`` turns the log off entirely, which is
    the cheap path for inference.
    """

    def __init__(self, record: bool = True):
        self._record = record
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __len__(self):
        return len(self._nodes)

    # ----- plumbing ---------------------------------------------------

    def _emit(self, kind: str, out_data: np.ndarray, inputs: tuple[Tensor, ...],
              vjp: Callable[[np.ndarray], tuple]) -> Tensor:
        if not np.all(np.isfinite(out_data)):
            raise NumericError(f"non-finite values produced by op {kind!r}")
        needs = any(t.requires_grad for t in inputs)
        out = Tensor(out_data, requires_grad=needs and self._record)
        if needs and self._record:
            self._nodes.append((out, inputs, vjp))
        return out

    # ----- primitive operations ---------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        out = a.data + b.data

        def vjp(g):
            return (_unbroadcast(g, a.data.shape) if a.requires_grad else None,
                    _unbroadcast(g, b.data.shape) if b.requires_grad else None)

        return self._emit("add", out, (a, b), vjp)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        out = a.data - b.data

        def vjp(g):
            return (_unbroadcast(g, a.data.shape) if a.requires_grad else None,
                    _unbroadcast(-g, b.data.shape) if b.requires_grad else None)

        return self._emit("sub", out, (a, b), vjp)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        out = a.data * b.data

        def vjp(g):
            return (_unbroadcast(g * b.data, a.data.shape) if a.requires_grad else None,
                    _unbroadcast(g * a.data, b.data.shape) if b.requires_grad else None)

        return self._emit("mul", out, (a, b), vjp)

    def matmul(self, a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
        """Matrix product; ``transpose_b`` multiplies by ``b.T`` without a
        separate transpose node (weights are stored output-major)."""
        ad, bd = a.data, b.data
        bm = bd.T if transpose_b else bd
        if not 1 <= ad.ndim <= 2 or not 1 <= bm.ndim <= 2:
            raise ShapeError(f"matmul: operands must be 1- or 2-d, got {ad.shape} @ {bd.shape}")
        if ad.shape[-1] != bm.shape[0]:
            raise ShapeError(f"matmul: inner dimensions differ {ad.shape} @ {bm.shape}")
        out = ad @ bm

        def vjp(g):
            g = np.asarray(g)
            if ad.ndim == 1 and bm.ndim == 1:          # dot product -> scalar
                da = g * bm
                db = g * ad
            elif ad.ndim == 1:                          # (k,) @ (k,n) -> (n,)
                da = bm @ g
                db = np.outer(ad, g)
            elif bm.ndim == 1:                          # (m,k) @ (k,) -> (m,)
                da = np.outer(g, bm)
                db = ad.T @ g
            else:                                       # (m,k) @ (k,n)
                da = g @ bm.T
                db = ad.T @ g
            if transpose_b and b.requires_grad:
                db = db.T
            return (da if a.requires_grad else None,
                    db if b.requires_grad else None)

        return self._emit("matmul", out, (a, b), vjp)

    def transpose(self, a: Tensor) -> Tensor:
        if a.ndim != 2:
            raise ShapeError(f"transpose: expected a matrix, got shape {a.shape}")
        out = a.data.T

        def vjp(g):
            return (g.T if a.requires_grad else None,)

        return self._emit("transpose", out, (a,), vjp)

    def sigmoid(self, a: Tensor) -> Tensor:
        out = _stable_sigmoid(a.data)

        def vjp(g):
            return (g * out * (1.0 - out) if a.requires_grad else None,)

        return self._emit("sigmoid", out, (a,), vjp)

    def tanh(self, a: Tensor) -> Tensor:
        out = np.tanh(a.data)

        def vjp(g):
            return (g * (1.0 - out * out) if a.requires_grad else None,)

        return self._emit("tanh", out, (a,), vjp)

    def relu(self, a: Tensor) -> Tensor:
        out = np.maximum(a.data, 0.0)

        def vjp(g):
            return (g * (a.data > 0) if a.requires_grad else None,)

        return self._emit("relu", out, (a,), vjp)

    def abs_diff(self, a: Tensor, b: Tensor) -> Tensor:
        """Elementwise |a - b|; the subgradient at a == b is taken as 0."""
        if a.shape != b.shape:
            raise ShapeError(f"abs_diff: shapes differ {a.shape} vs {b.shape}")
        diff = a.data - b.data
        out = np.abs(diff)
        sign = np.sign(diff)

        def vjp(g):
            return (g * sign if a.requires_grad else None,
                    -g * sign if b.requires_grad else None)

        return self._emit("abs_diff", out, (a, b), vjp)

    def concat(self, tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
        ts = tuple(tensors)
        if not ts:
            raise ShapeError("concat: empty input list")
        nd = ts[0].ndim
        for t in ts[1:]:
            if t.ndim != nd:
                raise ShapeError(f"concat: rank mismatch {ts[0].shape} vs {t.shape}")
        out = np.concatenate([t.data for t in ts], axis=axis)
        sizes = [t.data.shape[axis] for t in ts]
        bounds = np.cumsum(sizes)[:-1]

        def vjp(g):
            pieces = np.split(g, bounds, axis=axis)
            return tuple(p if t.requires_grad else None for p, t in zip(pieces, ts))

        return self._emit("concat", out, ts, vjp)

    def sum_tensors(self, tensors: Sequence[Tensor]) -> Tensor:
        """Elementwise sum of a list of same-shape tensors."""
        ts = tuple(tensors)
        if not ts:
            raise ShapeError("sum_tensors: empty input list")
        shape = ts[0].shape
        for t in ts[1:]:
            if t.shape != shape:
                raise ShapeError(f"sum_tensors: shapes differ {shape} vs {t.shape}")
        out = ts[0].data.copy()
        for t in ts[1:]:
            out += t.data

        def vjp(g):
            return tuple(g if t.requires_grad else None for t in ts)

        return self._emit("sum", out, ts, vjp)

    def slice_rows(self, a: Tensor, start: int, stop: int) -> Tensor:
        """Contiguous row slice of a matrix; the backward pass scatters the
        incoming gradient into an otherwise-zero block."""
        if a.ndim != 2:
            raise ShapeError(f"slice_rows: expected a matrix, got shape {a.shape}")
        if not 0 <= start <= stop <= a.shape[0]:
            raise ShapeError(f"slice_rows: bad range [{start}, {stop}) "
                             f"for {a.shape[0]} rows")
        out = a.data[start:stop]

        def vjp(g):
            if not a.requires_grad:
                return (None,)
            full = np.zeros_like(a.data)
            full[start:stop] = g
            return (full,)

        return self._emit("slice_rows", out, (a,), vjp)

    def gather_rows(self, a: Tensor, indices) -> Tensor:
        """Select rows of a matrix by integer index (duplicates allowed);
        the backward pass scatter-adds into the source rows."""
        if a.ndim != 2:
            raise ShapeError(f"gather_rows: expected a matrix, got shape {a.shape}")
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1:
            raise ShapeError(f"gather_rows: indices must be 1-d, got {idx.shape}")
        if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
            raise ShapeError(f"gather_rows: index outside [0, {a.shape[0]})")
        out = a.data[idx]

        def vjp(g):
            if not a.requires_grad:
                return (None,)
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            return (full,)

        return self._emit("gather_rows", out, (a,), vjp)

    def gradient_reversal(self, a: Tensor, lam: float = 1.0) -> Tensor:
        """Identity in the forward direction; multiplies the incoming
        gradient by ``-lam`` in the backward direction."""

        def vjp(g):
            return (-lam * g if a.requires_grad else None,)

        return self._emit("gradient_reversal", a.data, (a,), vjp)

    def softmax_nll(self, logits: Tensor, labels, reduction: str = "mean"):
        """Fused row softmax + negative log-likelihood.

        ``labels`` holds integer class indices (scalar or one per row).
        Returns ``(loss, probs)`` where ``loss`` is a scalar tensor and
        ``probs`` the detached softmax rows.  The softmax uses the usual
        log-sum-exp shift so large logits stay finite.
        """
        if reduction not in ("mean", "sum"):
            raise ValueError(f"softmax_nll: unknown reduction {reduction!r}")
        z = logits.data
        one_dim = z.ndim == 1
        if one_dim:
            z = z[None, :]
        if z.ndim != 2:
            raise ShapeError(f"softmax_nll: logits must be 1- or 2-d, got {logits.shape}")
        n, c = z.shape
        y = np.atleast_1d(np.asarray(labels, dtype=np.int64))
        if y.shape != (n,):
            raise ShapeError(f"softmax_nll: {n} rows but {y.shape} labels")
        if (y < 0).any() or (y >= c).any():
            raise ValueError(f"softmax_nll: class index outside [0, {c})")
        shifted = z - z.max(axis=1, keepdims=True)
        lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        logp = shifted - lse
        probs = np.exp(logp)
        losses = -logp[np.arange(n), y]
        total = losses.mean() if reduction == "mean" else losses.sum()

        def vjp(g):
            if not logits.requires_grad:
                return (None,)
            d = probs.copy()
            d[np.arange(n), y] -= 1.0
            if reduction == "mean":
                d /= n
            d = d * g
            return (d[0] if one_dim else d,)

        loss = self._emit("softmax_nll", np.asarray(total), (logits,), vjp)
        return loss, (probs[0] if one_dim else probs)

    # ----- generic dispatch -------------------------------------------

    def apply(self, kind: str, *inputs, **kwargs) -> Tensor:
        """Run an operation by kind name (used by the generic grad checks)."""
        table = {
            "matmul": self.matmul,
            "add": self.add,
            "sub": self.sub,
            "mul": self.mul,
            "sigmoid": self.sigmoid,
            "tanh": self.tanh,
            "relu": self.relu,
            "concat": self.concat,
            "sum": self.sum_tensors,
            "abs_diff": self.abs_diff,
            "softmax_nll": self.softmax_nll,
            "transpose": self.transpose,
            "gradient_reversal": self.gradient_reversal,
            "slice_rows": self.slice_rows,
            "gather_rows": self.gather_rows,
        }
        if kind not in table:
            raise ValueError(f"unknown op kind {kind!r}")
        return table[kind](*inputs, **kwargs)

    # ----- reverse sweep ----------------------------------------------

    def backward(self, loss: Tensor,
                 params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
        """Accumulate d(loss)/d(t) for every gradient-tracked tensor.

        ``loss`` must be scalar.  Tensors listed in ``params`` that the
        loss does not depend on receive explicit zero gradients, so a
        disconnected parameter is indistinguishable from one with zero
        gradient downstream.
        """
        if loss.data.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
        grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
        for out, inputs, vjp in reversed(self._nodes):
            g = grads.pop(out, None)
            if g is None:
                continue
            contribs = vjp(g)
            for t, c in zip(inputs, contribs):
                if c is None:
                    continue
                prev = grads.get(t)
                if prev is None:
                    grads[t] = np.array(c, dtype=np.float64, copy=True)
                else:
                    prev += c
        result = {t: g for t, g in grads.items() if t.requires_grad}
        if params is not None:
            for p in params:
                if p not in result:
                    result[p] = np.zeros_like(p.data)
        return result
