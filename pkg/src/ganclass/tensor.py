"""Dense real tensors with tape-based reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array (row-major, float32 by default, float64 for
gradient checking). Operations executed while a ``GradTape`` is active record
a node per op; since nodes are appended at execution time the tape is
topologically ordered by construction, and ``backward`` is a single reverse
sweep that visits each node exactly once.

Shapes are strict: the only implicit broadcast anywhere is the bias add
inside ``linear`` / ``conv2d`` / ``conv_transpose2d``. Scalar (python float)
operands are accepted by ``+`` and ``*`` for loss arithmetic.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DEFAULT_DTYPE = np.float32


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class DegenerateVarianceError(ValueError):
    """Batch statistics requested over fewer than two elements."""


class GradientError(RuntimeError):
    """Backward pass requested in an invalid state."""


# --------------------------------------------------------------------------
# tape machinery
# --------------------------------------------------------------------------

@dataclass
class TapeNode:
    out: "Tensor"
    inputs: tuple["Tensor", ...]
    backward_rule: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class GradTape:
    """Ordered record of differentiable operations.

    Use as a context manager; ops executed inside record themselves when any
    input requires a gradient. A tape is single-use: after one backward pass
    it refuses further passes until a new tape is recorded.
    """

    def __init__(self) -> None:
        self.nodes: list[TapeNode] = []
        self.consumed = False

    def __enter__(self) -> "GradTape":
        _push_tape(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _pop_tape(self)


# each thread records on its own stack; a tape never crosses threads
_TAPES = threading.local()


def _stack() -> list[GradTape]:
    try:
        return _TAPES.stack
    except AttributeError:
        _TAPES.stack = []
        return _TAPES.stack


def _push_tape(tape: GradTape) -> None:
    _stack().append(tape)


def _pop_tape(tape: GradTape) -> None:
    stack = _stack()
    if not stack or stack[-1] is not tape:
        raise GradientError("GradTape context exited out of order")
    stack.pop()


def active_tape() -> GradTape | None:
    stack = _stack()
    return stack[-1] if stack else None


class Tensor:
    """N-dimensional real array, optionally carrying a gradient."""

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: GradTape | None = None

    # -- introspection ----------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- gradient plumbing -------------------------------------------------
    def detach(self) -> "Tensor":
        """View of the same data with gradient tracking severed."""
        return Tensor(self.data, requires_grad=False)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad = self.grad + g

    def zero_grad(self) -> None:
        self.grad = None

    def assert_finite(self, context: str = "tensor") -> None:
        if not np.isfinite(self.data).all():
            raise FloatingPointError(f"non-finite values in {context}")

    def backward(self) -> None:
        backward(self)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward_rule) -> Tensor:
    """Attach ``out`` to the active tape if any input tracks gradients."""
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._tape = tape
        tape.nodes.append(TapeNode(out, inputs, backward_rule))
    return out


def backward(loss: Tensor) -> None:
    """Reverse-accumulate gradients of a scalar loss over its tape."""
    if loss.ndim != 0:
        raise GradientError(f"backward requires a scalar loss, got shape {loss.shape}")
    tape = loss._tape
    if tape is None:
        raise GradientError("loss is not attached to a live GradTape")
    if tape.consumed:
        raise GradientError("tape already consumed by a previous backward pass")
    tape.consumed = True
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.out.grad
        if g is None:
            continue
        grads = node.backward_rule(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None:
                continue
            if inp.requires_grad or inp._tape is tape:
                inp.accumulate_grad(gi)


# --------------------------------------------------------------------------
# elementwise and reduction ops
# --------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        out = Tensor(a.data + b)
        return _record(out, (a,), lambda g: (g,))
    if a.shape != b.shape:
        raise DimensionError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)
    return _record(out, (a, b), lambda g: (g, g))


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        k = float(b)
        out = Tensor(a.data * k)
        return _record(out, (a,), lambda g: (g * k,))
    if a.shape != b.shape:
        raise DimensionError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    a_data, b_data = a.data, b.data
    out = Tensor(a_data * b_data)
    return _record(out, (a, b), lambda g: (g * b_data, g * a_data))


def sum_all(t: Tensor) -> Tensor:
    shape = t.shape
    out = Tensor(t.data.sum())
    return _record(out, (t,), lambda g: (np.broadcast_to(g, shape).astype(t.data.dtype),))


def mean_all(t: Tensor) -> Tensor:
    n = t.size
    shape = t.shape
    out = Tensor(t.data.mean())
    return _record(out, (t,), lambda g: ((np.broadcast_to(g, shape) / n).astype(t.data.dtype),))


def reshape(t: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = t.shape
    out = Tensor(t.data.reshape(shape))
    return _record(out, (t,), lambda g: (g.reshape(old),))


# --------------------------------------------------------------------------
# activations
# --------------------------------------------------------------------------

def leaky_relu(t: Tensor, slope: float = 0.2) -> Tensor:
    if not (0.0 <= slope < 1.0):
        raise ValueError(f"leaky_relu slope must be in [0, 1), got {slope}")
    x = t.data
    pos = x > 0  # subgradient at exactly 0 is the slope
    out = Tensor(np.where(pos, x, slope * x))

    def rule(g):
        return (np.where(pos, g, slope * g),)

    return _record(out, (t,), rule)


def relu(t: Tensor) -> Tensor:
    x = t.data
    pos = x > 0
    out = Tensor(np.where(pos, x, 0.0).astype(x.dtype))
    return _record(out, (t,), lambda g: (np.where(pos, g, 0.0).astype(g.dtype),))


def tanh(t: Tensor) -> Tensor:
    y = np.tanh(t.data)
    out = Tensor(y)
    return _record(out, (t,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function (plain array helper)."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction (plain array helper)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight + bias`` for x[N,F], weight[F,G], bias[G]."""
    if x.ndim != 2 or weight.ndim != 2:
        raise DimensionError(f"linear expects 2-d input/weight, got {x.shape}, {weight.shape}")
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(f"linear inner dims disagree: {x.shape} @ {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise DimensionError(f"linear bias shape {bias.shape} != ({weight.shape[1]},)")
    x_data, w_data = x.data, weight.data
    out = Tensor(x_data @ w_data + bias.data)

    def rule(g):
        return (g @ w_data.T, x_data.T @ g, g.sum(axis=0))

    return _record(out, (x, weight, bias), rule)


# --------------------------------------------------------------------------
# convolution (im2col / col2im)
# --------------------------------------------------------------------------

def _pad2d(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """All kh*kw windows at the given stride: [N,C,Ho,Wo,kh,kw]."""
    w = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return w[:, :, ::stride, ::stride]


def _scatter_windows(cols: np.ndarray, out_h: int, out_w: int, stride: int) -> np.ndarray:
    """Adjoint of ``_windows``: sum cols[N,Ho,Wo,C,kh,kw] back onto a [N,C,out_h,out_w] canvas."""
    n, ho, wo, c, kh, kw = cols.shape
    out = np.zeros((n, c, out_h, out_w), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + (ho - 1) * stride + 1 : stride,
                j : j + (wo - 1) * stride + 1 : stride] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation of x[N,Cin,H,W] with kernel[Cout,Cin,kh,kw]."""
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects 4-d input/kernel, got {x.shape}, {kernel.shape}")
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if cin != kcin:
        raise DimensionError(f"conv2d channel mismatch: input has {cin}, kernel expects {kcin}")
    if bias.shape != (cout,):
        raise DimensionError(f"conv2d bias shape {bias.shape} != ({cout},)")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError(
            f"conv2d kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1

    xp = _pad2d(x.data, padding)
    cols = _windows(xp, kh, kw, stride)                       # [N,Cin,Ho,Wo,kh,kw]
    cols2 = np.ascontiguousarray(cols.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, cin * kh * kw)
    k2 = kernel.data.reshape(cout, cin * kh * kw)
    out2 = cols2 @ k2.T + bias.data
    out = Tensor(out2.reshape(n, ho, wo, cout).transpose(0, 3, 1, 2))

    x_shape = (n, cin, h, w)
    kernel_shape = kernel.shape

    def rule(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, cout)
        grad_bias = g2.sum(axis=0)
        grad_kernel = (g2.T @ cols2).reshape(kernel_shape)
        grad_cols = (g2 @ k2).reshape(n, ho, wo, cin, kh, kw)
        hp, wp = h + 2 * padding, w + 2 * padding
        grad_xp = _scatter_windows(grad_cols, hp, wp, stride)
        grad_x = grad_xp[:, :, padding : padding + h, padding : padding + w] if padding else grad_xp
        return (grad_x, grad_kernel, grad_bias)

    return _record(out, (x, kernel, bias), rule)


def conv_transpose2d(x: Tensor, kernel: Tensor, bias: Tensor,
                     stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed 2-d convolution of x[N,Cin,H,W] with kernel[Cin,Cout,kh,kw].

    Forward here is exactly the adjoint of ``conv2d``'s input gradient with
    the same kernel array, so output size is (H-1)*stride - 2*padding + kh.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"padding must be >= 0, got {padding}")
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv_transpose2d expects 4-d input/kernel, got {x.shape}, {kernel.shape}")
    n, cin, h, w = x.shape
    kcin, cout, kh, kw = kernel.shape
    if cin != kcin:
        raise DimensionError(f"conv_transpose2d channel mismatch: input has {cin}, kernel expects {kcin}")
    if bias.shape != (cout,):
        raise DimensionError(f"conv_transpose2d bias shape {bias.shape} != ({cout},)")
    ho = (h - 1) * stride - 2 * padding + kh
    wo = (w - 1) * stride - 2 * padding + kw
    if ho <= 0 or wo <= 0:
        raise DimensionError(
            f"conv_transpose2d output extent {ho}x{wo} not positive for input {h}x{w}, "
            f"kernel {kh}x{kw}, stride {stride}, padding {padding}")

    x2 = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)).reshape(n * h * w, cin)
    k2 = kernel.data.reshape(cin, cout * kh * kw)
    cols = (x2 @ k2).reshape(n, h, w, cout, kh, kw)
    full = _scatter_windows(cols, ho + 2 * padding, wo + 2 * padding, stride)
    out_data = full[:, :, padding : padding + ho, padding : padding + wo] if padding else full
    out = Tensor(out_data + bias.data[None, :, None, None])

    kernel_shape = kernel.shape

    def rule(g):
        gp = _pad2d(g, padding)
        gw = _windows(gp, kh, kw, stride)                     # [N,Cout,H,W,kh,kw]
        gcols = np.ascontiguousarray(gw.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, cout * kh * kw)
        grad_x = (gcols @ k2.T).reshape(n, h, w, cin).transpose(0, 3, 1, 2)
        grad_kernel = (x2.T @ gcols).reshape(kernel_shape)
        grad_bias = g.sum(axis=(0, 2, 3))
        return (grad_x, grad_kernel, grad_bias)

    return _record(out, (x, kernel, bias), rule)


# --------------------------------------------------------------------------
# batch normalization
# --------------------------------------------------------------------------

@dataclass
class RunningStats:
    """Exponential moving averages of per-channel mean and variance."""

    mean: np.ndarray
    var: np.ndarray

    @classmethod
    def for_channels(cls, channels: int, dtype=DEFAULT_DTYPE) -> "RunningStats":
        return cls(np.zeros(channels, dtype=dtype), np.ones(channels, dtype=dtype))

    def copy(self) -> "RunningStats":
        return RunningStats(self.mean.copy(), self.var.copy())


def batchnorm2d(x: Tensor, gamma: Tensor, beta: Tensor, mode: str,
                running_stats: RunningStats, epsilon: float = 1e-5,
                momentum: float = 0.1) -> Tensor:
    """Per-channel normalization of x[N,C,H,W].

    Train mode normalizes with batch statistics and folds them into
    ``running_stats``; eval mode normalizes with the running statistics.
    """
    if x.ndim != 4:
        raise DimensionError(f"batchnorm2d expects 4-d input, got {x.shape}")
    n, c, h, w = x.shape
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm2d gamma/beta must be ({c},), got {gamma.shape}, {beta.shape}")
    if mode not in ("train", "eval"):
        raise ValueError(f"batchnorm2d mode must be 'train' or 'eval', got {mode!r}")

    xd = x.data
    g_data, b_data = gamma.data, beta.data

    if mode == "train":
        m = n * h * w
        if m < 2:
            raise DegenerateVarianceError(
                f"batchnorm2d train mode needs >= 2 elements per channel, got {m}")
        mean = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        inv_std = 1.0 / np.sqrt(var + epsilon)
        xhat = (xd - mean[None, :, None, None]) * inv_std[None, :, None, None]
        # running variance keeps the unbiased estimate for eval-time use
        unbiased = var * (m / (m - 1))
        running_stats.mean[...] = (1.0 - momentum) * running_stats.mean + momentum * mean
        running_stats.var[...] = (1.0 - momentum) * running_stats.var + momentum * unbiased
        out = Tensor(g_data[None, :, None, None] * xhat + b_data[None, :, None, None])

        def rule(g):
            dxhat = g * g_data[None, :, None, None]
            sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            dx = (inv_std[None, :, None, None] / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
            dgamma = (g * xhat).sum(axis=(0, 2, 3))
            dbeta = g.sum(axis=(0, 2, 3))
            return (dx, dgamma, dbeta)

        return _record(out, (x, gamma, beta), rule)

    inv_std = 1.0 / np.sqrt(running_stats.var + epsilon)
    xhat = (xd - running_stats.mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = Tensor(g_data[None, :, None, None] * xhat + b_data[None, :, None, None])

    def rule(g):
        dx = g * (g_data * inv_std)[None, :, None, None]
        dgamma = (g * xhat).sum(axis=(0, 2, 3))
        dbeta = g.sum(axis=(0, 2, 3))
        return (dx, dgamma, dbeta)

    return _record(out, (x, gamma, beta), rule)


# --------------------------------------------------------------------------
# losses
# --------------------------------------------------------------------------

def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under row softmax."""
    if logits.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy expects 2-d logits, got {logits.shape}")
    n, c = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"label out of range [0, {c}): {labels.min()}..{labels.max()}")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    picked = z[np.arange(n), labels]
    out = Tensor((lse - picked).mean())

    probs = softmax(z)

    def rule(g):
        dz = probs.copy()
        dz[np.arange(n), labels] -= 1.0
        return (dz * (g / n),)

    return _record(out, (logits,), rule)


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy in the fused, numerically stable form."""
    if logits.ndim != 1:
        raise DimensionError(f"bce_with_logits expects 1-d logits, got {logits.shape}")
    targets = np.asarray(targets, dtype=logits.data.dtype)
    if targets.shape != logits.shape:
        raise DimensionError(f"targets shape {targets.shape} != {logits.shape}")
    if not np.isin(targets, (0.0, 1.0)).all():
        raise ValueError("bce_with_logits targets must be binary")
    z = logits.data
    n = z.shape[0]
    loss = np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    out = Tensor(loss.mean())

    p = sigmoid(z)

    def rule(g):
        return ((p - targets) * (g / n),)

    return _record(out, (logits,), rule)
