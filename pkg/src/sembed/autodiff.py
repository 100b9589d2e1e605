"""Minimal dense tensor type with reverse-mode automatic differentiation.

Everything is float64 and eager: operations compute numpy results immediately
and, when a Tape is active and an input requires gradients, append a node with
a local backward rule. Tape.backward walks the node list in reverse, which is
a valid topological order because nodes are recorded in execution order.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "matmul",
    "conv1d_causal",
    "relu",
    "sigmoid",
    "tanh",
    "add",
    "mul",
    "scale",
    "transpose",
    "sum_all",
    "mean_pool_time",
    "broadcast_rows",
    "concat_cols",
    "concat_rows",
    "slice_row",
    "slice1d",
    "embed_rows",
    "add_bias_rows",
    "add_bias_cols",
    "dropout",
    "mse_loss",
    "cross_entropy_loss",
    "sgd_step",
]


class Tensor:
    """Dense n-dimensional float64 array, optionally participating in a tape.

    data is row-major (C order); grad, when populated, always matches data's
    shape. Tensors are plain values: nothing here is thread-local except the
    active-tape stack used while building a graph.
    """

    __slots__ = ("data", "requires_grad", "grad", "tape")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() requires a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class Node:
    """One recorded operation: input references, output reference, backward rule."""

    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs: tuple, output: Tensor, backward_fn: Callable[[np.ndarray], None]):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


_TAPE_STACK: list["Tape"] = []


def _active_tape() -> Optional["Tape"]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tape:
    """Ordered record of operations for one reverse-mode sweep.

    Single-threaded by contract: one training step builds and consumes one
    tape. Nodes are appended in execution order, so the list is topologically
    sorted and a reverse walk propagates gradients correctly.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self

    def record(self, inputs: tuple, output: Tensor, backward_fn) -> None:
        output.tape = self
        self.nodes.append(Node(inputs, output, backward_fn))

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {loss.shape}")
        if loss.tape is not self:
            raise ValueError("loss was not produced on this tape")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.output.grad is not None:
                node.backward_fn(node.output.grad)


def backward(loss: Tensor) -> None:
    """Populate grad on every requires_grad leaf reachable from loss."""
    if loss.data.size != 1:
        raise ValueError(f"backward() requires a scalar loss, got shape {loss.shape}")
    if loss.tape is None:
        raise ValueError("loss was not produced on an active tape")
    loss.tape.backward(loss)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _make_output(data: np.ndarray, inputs: Sequence[Tensor], backward_fn_factory) -> Tensor:
    """Create the result tensor and record a node if a tape is listening."""
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape.record(tuple(inputs), out, backward_fn_factory(out))
    return out


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")

    def bw(out):
        def fn(g):
            _accum(a, g)
            _accum(b, g)
        return fn

    return _make_output(a.data + b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")

    def bw(out):
        def fn(g):
            _accum(a, g * b.data)
            _accum(b, g * a.data)
        return fn

    return _make_output(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bw(out):
        def fn(g):
            _accum(a, g * c)
        return fn

    return _make_output(a.data * c, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. a may be (m,k) or (k,); b must be (k,n)."""
    if b.data.ndim != 2 or a.data.ndim not in (1, 2):
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    if a.data.shape[-1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    if a.data.ndim == 1:
        def bw(out):
            def fn(g):
                _accum(a, g @ b.data.T)
                _accum(b, np.outer(a.data, g))
            return fn
    else:
        def bw(out):
            def fn(g):
                _accum(a, g @ b.data.T)
                _accum(b, a.data.T @ g)
            return fn

    return _make_output(a.data @ b.data, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"transpose requires a 2-d tensor, got shape {a.shape}")

    def bw(out):
        def fn(g):
            _accum(a, g.T)
        return fn

    return _make_output(a.data.T, (a,), bw)


# ---------------------------------------------------------------------------
# activations


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0

    def bw(out):
        def fn(g):
            _accum(a, g * mask)
        return fn

    return _make_output(np.where(mask, a.data, 0.0), (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    # branch on sign for numerical stability at large |x|
    y = np.where(a.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(a.data))),
                 np.exp(-np.abs(a.data)) / (1.0 + np.exp(-np.abs(a.data))))

    def bw(out):
        def fn(g):
            _accum(a, g * y * (1.0 - y))
        return fn

    return _make_output(y, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def bw(out):
        def fn(g):
            _accum(a, g * (1.0 - y * y))
        return fn

    return _make_output(y, (a,), bw)


# ---------------------------------------------------------------------------
# convolution


def conv1d_causal(x: Tensor, w: Tensor, dilation: int) -> Tensor:
    """Dilated causal 1-d convolution.

    x is (C_in, T), w is (C_out, C_in, k). Tap i of the filter reaches
    dilation*(k-1-i) steps into the past, so tap k-1 reads the current frame
    and the input is left zero-padded by dilation*(k-1) frames. Output length
    equals T and output[:, t] never depends on x[:, t'] with t' > t.
    """
    if not isinstance(dilation, int) or isinstance(dilation, bool):
        raise ValueError(f"dilation must be a positive integer, got {dilation!r}")
    if dilation < 1:
        raise ValueError(f"dilation must be a positive integer, got {dilation}")
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ValueError(f"conv1d_causal expects x (C_in,T) and w (C_out,C_in,k), got {x.shape} and {w.shape}")
    c_out, c_in_w, k = w.shape
    c_in, t_len = x.shape
    if k < 1:
        raise ValueError(f"kernel size must be >= 1, got {k}")
    if c_in_w != c_in:
        raise ValueError(f"conv1d_causal channel mismatch: x has {c_in} channels, w expects {c_in_w}")

    pad = dilation * (k - 1)
    xp = np.zeros((c_in, t_len + pad), dtype=np.float64)
    xp[:, pad:] = x.data
    y = np.zeros((c_out, t_len), dtype=np.float64)
    for i in range(k):
        shift = dilation * (k - 1 - i)
        y += w.data[:, :, i] @ xp[:, pad - shift:pad - shift + t_len]

    def bw(out):
        def fn(g):
            if w.requires_grad:
                gw = np.empty_like(w.data)
                for i in range(k):
                    shift = dilation * (k - 1 - i)
                    gw[:, :, i] = g @ xp[:, pad - shift:pad - shift + t_len].T
                _accum(w, gw)
            if x.requires_grad:
                gxp = np.zeros_like(xp)
                for i in range(k):
                    shift = dilation * (k - 1 - i)
                    gxp[:, pad - shift:pad - shift + t_len] += w.data[:, :, i].T @ g
                _accum(x, gxp[:, pad:])
        return fn

    return _make_output(y, (x, w), bw)


# ---------------------------------------------------------------------------
# shape plumbing


def sum_all(a: Tensor) -> Tensor:
    def bw(out):
        def fn(g):
            _accum(a, np.full_like(a.data, float(g)))
        return fn

    return _make_output(np.asarray(a.data.sum()), (a,), bw)


def mean_pool_time(x: Tensor, start: int = 0) -> Tensor:
    """Mean over the time axis of a (C, T) tensor, pooling columns start..T-1."""
    if x.data.ndim != 2:
        raise ValueError(f"mean_pool_time expects (C,T), got shape {x.shape}")
    t_len = x.shape[1]
    if not 0 <= start < t_len:
        raise ValueError(f"pool start {start} out of range for T={t_len}")
    n = t_len - start

    def bw(out):
        def fn(g):
            gx = np.zeros_like(x.data)
            gx[:, start:] = g[:, None] / n
            _accum(x, gx)
        return fn

    return _make_output(x.data[:, start:].mean(axis=1), (x,), bw)


def broadcast_rows(v: Tensor, n: int) -> Tensor:
    """Tile a vector (E,) into n identical rows (n, E)."""
    if v.data.ndim != 1:
        raise ValueError(f"broadcast_rows expects a vector, got shape {v.shape}")
    if n < 1:
        raise ValueError(f"row count must be >= 1, got {n}")

    def bw(out):
        def fn(g):
            _accum(v, g.sum(axis=0))
        return fn

    return _make_output(np.tile(v.data, (n, 1)), (v,), bw)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ValueError(f"concat_cols shape mismatch: {a.shape} vs {b.shape}")
    p = a.shape[1]

    def bw(out):
        def fn(g):
            _accum(a, g[:, :p])
            _accum(b, g[:, p:])
        return fn

    return _make_output(np.concatenate([a.data, b.data], axis=1), (a, b), bw)


def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    """Stack vectors (H,) into a matrix (L, H)."""
    parts = list(parts)
    if not parts:
        raise ValueError("concat_rows requires at least one row")
    for p in parts:
        if p.data.ndim != 1 or p.shape != parts[0].shape:
            raise ValueError("concat_rows requires equal-length vectors")

    def bw(out):
        def fn(g):
            for i, p in enumerate(parts):
                _accum(p, g[i])
        return fn

    return _make_output(np.stack([p.data for p in parts]), tuple(parts), bw)


def slice_row(x: Tensor, i: int) -> Tensor:
    """Row i of a (n, m) tensor as a vector (m,)."""
    if x.data.ndim != 2:
        raise ValueError(f"slice_row expects a 2-d tensor, got shape {x.shape}")
    if not 0 <= i < x.shape[0]:
        raise IndexError(f"row {i} out of range for shape {x.shape}")

    def bw(out):
        def fn(g):
            gx = np.zeros_like(x.data)
            gx[i] = g
            _accum(x, gx)
        return fn

    return _make_output(x.data[i].copy(), (x,), bw)


def slice1d(x: Tensor, lo: int, hi: int) -> Tensor:
    if x.data.ndim != 1:
        raise ValueError(f"slice1d expects a vector, got shape {x.shape}")
    if not 0 <= lo < hi <= x.shape[0]:
        raise IndexError(f"slice [{lo}:{hi}] out of range for shape {x.shape}")

    def bw(out):
        def fn(g):
            gx = np.zeros_like(x.data)
            gx[lo:hi] = g
            _accum(x, gx)
        return fn

    return _make_output(x.data[lo:hi].copy(), (x,), bw)


def embed_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of a (V, E) table; gradients scatter-add back into it."""
    idx = np.asarray(ids, dtype=np.intp)
    if table.data.ndim != 2:
        raise ValueError(f"embed_rows expects a 2-d table, got shape {table.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range for table with {table.shape[0]} rows")

    def bw(out):
        def fn(g):
            if table.requires_grad:
                gt = np.zeros_like(table.data)
                np.add.at(gt, idx, g)
                _accum(table, gt)
        return fn

    return _make_output(table.data[idx], (table,), bw)


def add_bias_rows(x: Tensor, b: Tensor) -> Tensor:
    """Add a vector (m,) to every row of (n, m)."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ValueError(f"add_bias_rows shape mismatch: {x.shape} + {b.shape}")

    def bw(out):
        def fn(g):
            _accum(x, g)
            _accum(b, g.sum(axis=0))
        return fn

    return _make_output(x.data + b.data, (x, b), bw)


def add_bias_cols(x: Tensor, b: Tensor) -> Tensor:
    """Add a vector (n,) to every column of (n, m)."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[0] != b.shape[0]:
        raise ValueError(f"add_bias_cols shape mismatch: {x.shape} + {b.shape}")

    def bw(out):
        def fn(g):
            _accum(x, g)
            _accum(b, g.sum(axis=1))
        return fn

    return _make_output(x.data + b.data[:, None], (x, b), bw)


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout; identity (the same tensor) when not training or p == 0."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode requires an explicit rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)

    def bw(out):
        def fn(g):
            _accum(x, g * mask)
        return fn

    return _make_output(x.data * mask, (x,), bw)


# ---------------------------------------------------------------------------
# losses


def mse_loss(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mse_loss shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size

    def bw(out):
        def fn(g):
            _accum(a, (2.0 * float(g) / n) * diff)
            _accum(b, (-2.0 * float(g) / n) * diff)
        return fn

    return _make_output(np.asarray((diff * diff).mean()), (a, b), bw)


def cross_entropy_loss(logits: Tensor, targets: Sequence[int], ignore_index: Optional[int] = None) -> Tensor:
    """Mean cross entropy of (L, V) logits against integer class targets.

    Rows whose target equals ignore_index contribute nothing; log-softmax is
    stabilized by subtracting the per-row max.
    """
    if logits.data.ndim != 2:
        raise ValueError(f"cross_entropy_loss expects (L,V) logits, got shape {logits.shape}")
    idx = np.asarray(targets, dtype=np.intp)
    if idx.ndim != 1 or idx.shape[0] != logits.shape[0]:
        raise ValueError(f"targets length {idx.shape} does not match logits rows {logits.shape[0]}")
    vocab = logits.shape[1]
    valid = np.ones(idx.shape[0], dtype=bool) if ignore_index is None else idx != ignore_index
    checked = idx[valid]
    if checked.size and (checked.min() < 0 or checked.max() >= vocab):
        raise IndexError(f"class index out of range for vocab size {vocab}")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("cross_entropy_loss: every target position is ignored")

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(idx.shape[0])
    picked = np.where(valid, log_probs[rows, np.where(valid, idx, 0)], 0.0)
    loss = -picked.sum() / n_valid

    def bw(out):
        def fn(g):
            soft = np.exp(log_probs)
            soft[rows[valid], idx[valid]] -= 1.0
            soft[~valid] = 0.0
            _accum(logits, (float(g) / n_valid) * soft)
        return fn

    return _make_output(np.asarray(loss), (logits,), bw)


# ---------------------------------------------------------------------------
# optimizer


def sgd_step(params: Sequence[Tensor], lr: float, clip_norm: Optional[float] = None) -> None:
    """In-place p <- p - lr*g with optional global-norm clipping; clears grads."""
    if lr <= 0.0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if clip_norm is not None and clip_norm <= 0.0:
        raise ValueError(f"clip_norm must be positive, got {clip_norm}")
    params = list(params)
    for p in params:
        if p.grad is None:
            raise ValueError("sgd_step: parameter is missing its gradient (did backward run?)")
    factor = 1.0
    if clip_norm is not None:
        total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params))
        if total > clip_norm:
            factor = clip_norm / total
    for p in params:
        p.data -= (lr * factor) * p.grad
        p.grad = None
