"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray; every primitive records its backward rule on
the currently active Tape. Tapes record nodes in creation order, which
is already a topological order, so backward() is one reverse sweep with
no graph search. Interior gradients are freed as soon as they have been
propagated, which keeps peak memory close to the forward-activation
footprint.

Fused primitives (softmax_lastdim, layer_norm, cross_entropy,
gate_renormalize, causal_conv1d, masked_attention,
gated_attention_values, linear) exist because composing them from
elementwise ops at sequence scale allocates several times more memory
than the fused backward rules need. Ops whose backward can cheaply
recompute an intermediate (normalized activations, dropout masks, gelu
tanh terms, attention score matrices) do so instead of retaining it;
at batch 64 x context 256 x 6 layers the retained-activation footprint
is what decides whether a training step fits in memory at all.
"""

from __future__ import annotations

import warnings

import numpy as np

_ACTIVE_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of one forward pass, used once for backward."""

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _ACTIVE_TAPES.pop()
        if popped is not self:
            raise RuntimeError("tape exit order violated")
        return False

    def __len__(self) -> int:
        return len(self._nodes)


class Tensor:
    """ndarray plus an optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._backward = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, _lift(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(other, self))

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, _lift(other, self))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, _lift(other, self))

    def __rtruediv__(self, other):
        return div(_lift(other, self), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _record(data: np.ndarray, parents, backward) -> Tensor:
    """Wrap `data`; register the node if a tape is active and any parent
    participates in differentiation."""
    out = Tensor(data)
    if _ACTIVE_TAPES and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._backward = backward
        _ACTIVE_TAPES[-1]._nodes.append(out)
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `g` down to `shape`, inverting numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss: Tensor, tape: Tape):
    """Reverse sweep: fills .grad on every reachable requires_grad leaf.

    The tape is single-use; interior grads and closures are released as
    the sweep passes them.
    """
    if tape._consumed:
        raise RuntimeError("tape already consumed by a previous backward()")
    tape._consumed = True
    if loss.data.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape._nodes):
        fn = node._backward
        if fn is None or node.grad is None:
            node._backward = None
            node.grad = None
            continue
        fn(node.grad)
        node.grad = None
        node._backward = None
    tape._nodes.clear()


# ---------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(dy):
        _accum(a, _unbroadcast(dy, a.data.shape))
        _accum(b, _unbroadcast(dy, b.data.shape))

    return _record(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bw(dy):
        _accum(a, _unbroadcast(dy, a.data.shape))
        _accum(b, _unbroadcast(-dy, b.data.shape))

    return _record(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bw(dy):
        _accum(a, _unbroadcast(dy * b.data, a.data.shape))
        _accum(b, _unbroadcast(dy * a.data, b.data.shape))

    return _record(a.data * b.data, (a, b), bw)


def div(a: Tensor, b: Tensor) -> Tensor:
    def bw(dy):
        _accum(a, _unbroadcast(dy / b.data, a.data.shape))
        _accum(b, _unbroadcast(-dy * a.data / (b.data * b.data), b.data.shape))

    return _record(a.data / b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    def bw(dy):
        _accum(a, -dy)

    return _record(-a.data, (a,), bw)


def power(a: Tensor, p) -> Tensor:
    """a ** p for a constant python exponent."""
    p = float(p)

    def bw(dy):
        _accum(a, dy * p * np.power(a.data, p - 1.0))

    return _record(np.power(a.data, p), (a,), bw)


# ---------------------------------------------------------------------
# transcendental / activation
# ---------------------------------------------------------------------

def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def bw(dy):
        _accum(a, dy * y)

    return _record(y, (a,), bw)


def log(a: Tensor) -> Tensor:
    def bw(dy):
        _accum(a, dy / a.data)

    return _record(np.log(a.data), (a,), bw)


def sqrt(a: Tensor) -> Tensor:
    y = np.sqrt(a.data)

    def bw(dy):
        _accum(a, dy * (0.5 / y))

    return _record(y, (a,), bw)


def sin(a: Tensor) -> Tensor:
    def bw(dy):
        _accum(a, dy * np.cos(a.data))

    return _record(np.sin(a.data), (a,), bw)


def cos(a: Tensor) -> Tensor:
    def bw(dy):
        _accum(a, -dy * np.sin(a.data))

    return _record(np.cos(a.data), (a,), bw)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def bw(dy):
        _accum(a, dy * (1.0 - y * y))

    return _record(y, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    # stable two-branch form; overflow-free for large |x|
    x = a.data
    y = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    y = y.astype(x.dtype, copy=False)

    def bw(dy):
        _accum(a, dy * y * (1.0 - y))

    return _record(y, (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def bw(dy):
        _accum(a, dy * mask)

    return _record(np.where(mask, a.data, 0.0), (a,), bw)


# python floats: numpy float64 scalars are strong types and would
# silently promote float32 activations
_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def gelu(a: Tensor) -> Tensor:
    """tanh-approximate gelu: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3))).

    Backward recomputes the tanh term from the input rather than
    retaining it; at MLP width that array would rival the layer's whole
    activation footprint, and one extra tanh pass is cheap next to the
    surrounding matmuls.
    """
    x = a.data
    t = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
    y = 0.5 * x * (1.0 + t)

    def bw(dy):
        t = np.tanh(_GELU_C * (x + _GELU_A * x * x * x))
        du = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        _accum(a, dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du))

    return _record(y, (a,), bw)


# ---------------------------------------------------------------------
# shape and indexing
# ---------------------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape

    def bw(dy):
        _accum(a, dy.reshape(old))

    return _record(a.data.reshape(shape), (a,), bw)


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.data.ndim)))
    inv = tuple(np.argsort(axes))

    def bw(dy):
        _accum(a, dy.transpose(inv))

    return _record(a.data.transpose(axes), (a,), bw)


def getitem(a: Tensor, idx) -> Tensor:
    """Basic indexing (ints/slices/ellipsis). Backward scatters into zeros."""

    def bw(dy):
        g = np.zeros_like(a.data)
        g[idx] = dy
        _accum(a, g)

    return _record(a.data[idx], (a,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(dy):
        for t, piece in zip(tensors, np.split(dy, splits, axis=axis)):
            _accum(t, piece)

    return _record(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


# ---------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------

def _restore_dims(dy: np.ndarray, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(dy, shape)
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        for ax in sorted(a % len(shape) for a in axes):
            dy = np.expand_dims(dy, ax)
    return np.broadcast_to(dy, shape)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.data.shape

    def bw(dy):
        _accum(a, _restore_dims(dy, shape, axis, keepdims).copy())

    return _record(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.data.shape
    n = a.data.size if axis is None else np.prod(
        [shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])

    def bw(dy):
        _accum(a, _restore_dims(dy, shape, axis, keepdims) / n)

    return _record(a.data.mean(axis=axis, keepdims=keepdims), (a,), bw)


def cumsum(a: Tensor, axis: int = -1) -> Tensor:
    def bw(dy):
        _accum(a, np.flip(np.cumsum(np.flip(dy, axis), axis=axis), axis))

    return _record(np.cumsum(a.data, axis=axis), (a,), bw)


# ---------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product; operands must be at least 2-D."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul inner dimensions disagree: {a.data.shape} x {b.data.shape}")

    def bw(dy):
        _accum(a, _unbroadcast(np.matmul(dy, np.swapaxes(b.data, -1, -2)), a.data.shape))
        _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), dy), b.data.shape))

    return _record(np.matmul(a.data, b.data), (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w (+ b) as one node.

    matmul-then-add would retain the pre-bias product next to the sum;
    at MLP width that doubles the layer's biggest activation.
    """
    if x.data.ndim < 2 or w.data.ndim < 2:
        raise ValueError("linear operands must be at least 2-D")
    if x.data.shape[-1] != w.data.shape[-2]:
        raise ValueError(f"linear inner dimensions disagree: {x.data.shape} x {w.data.shape}")
    y = np.matmul(x.data, w.data)
    if b is not None:
        y += b.data

    def bw(dy):
        _accum(x, _unbroadcast(np.matmul(dy, np.swapaxes(w.data, -1, -2)), x.data.shape))
        _accum(w, _unbroadcast(np.matmul(np.swapaxes(x.data, -1, -2), dy), w.data.shape))
        if b is not None:
            _accum(b, _unbroadcast(dy, b.data.shape))

    return _record(y, (x, w) if b is None else (x, w, b), bw)


# ---------------------------------------------------------------------
# fused network primitives
# ---------------------------------------------------------------------

def softmax_lastdim(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis with an optional additive mask.

    The mask is a constant ndarray (broadcastable to x); a row whose mask
    disables every entry comes out uniform (max-subtraction keeps it
    finite) and is flagged with a warning, since a causal mask always
    admits at least the diagonal.
    """
    if mask is not None and np.any(np.all(mask <= -1e8, axis=-1)):
        warnings.warn("softmax_lastdim: fully-masked row, output uniform", RuntimeWarning)
    z = x.data if mask is None else x.data + mask
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(dy):
        dx = y * (dy - np.sum(dy * y, axis=-1, keepdims=True))
        _accum(x, dx)

    return _record(y, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift.

    Only the per-row inverse std survives to backward; the normalized
    activations are recomputed there from the (unmutated) input, which is
    bit-identical and trades one activation-sized buffer per call for two
    cheap elementwise passes.
    """
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = np.mean(xc * xc, axis=-1, keepdims=True)
    r = 1.0 / np.sqrt(var + eps)
    y = (xc * r) * gain.data + bias.data

    def bw(dy):
        xh = (x.data - x.data.mean(axis=-1, keepdims=True)) * r
        dxh = dy * gain.data
        _accum(gain, (dy * xh).sum(axis=tuple(range(dy.ndim - 1))))
        _accum(bias, dy.sum(axis=tuple(range(dy.ndim - 1))))
        m1 = dxh.mean(axis=-1, keepdims=True)
        m2 = (dxh * xh).mean(axis=-1, keepdims=True)
        _accum(x, r * (dxh - m1 - xh * m2))

    return _record(y, (x, gain, bias), bw)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather weight[ids]; backward scatter-adds into the table."""
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise TypeError("embedding ids must be integers")

    def bw(dy):
        g = np.zeros_like(weight.data)
        np.add.at(g, ids, dy)
        _accum(weight, g)

    return _record(weight.data[ids], (weight,), bw)


def _replay_uniform(bg_cls, state, shape) -> np.ndarray:
    """Re-draw rng.random(shape) from a bit-generator state snapshot."""
    bg = bg_cls()
    bg.state = state
    return np.random.Generator(bg).random(shape)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: keep with prob 1-p, scale kept values by 1/(1-p).

    Caller decides train/eval; this always drops. rng draw order is part
    of the reproducibility contract. The keep mask is not retained:
    backward replays the same draw from the generator state captured just
    before it, so no mask-sized buffer outlives the forward pass.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout p must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    bg_cls = type(rng.bit_generator)
    state = rng.bit_generator.state
    keep = rng.random(x.data.shape) >= p
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.data.dtype)
    y = x.data * keep
    y *= scale

    def bw(dy):
        keep = _replay_uniform(bg_cls, state, dy.shape) >= p
        _accum(x, dy * keep * scale)

    return _record(y, (x,), bw)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood in nats over all target positions.

    logits: [..., V]; targets: integer array of the leading shape.
    """
    targets = np.asarray(targets)
    v = logits.data.shape[-1]
    flat = logits.data.reshape(-1, v)
    tflat = targets.reshape(-1)
    if flat.shape[0] != tflat.shape[0]:
        raise ValueError("targets shape does not match logits leading shape")
    m = flat.max(axis=-1, keepdims=True)
    z = flat - m
    ez = np.exp(z)
    sez = ez.sum(axis=-1, keepdims=True)
    probs = ez / sez
    n = tflat.shape[0]
    rows = np.arange(n)
    nll = -(z[rows, tflat] - np.log(sez[:, 0]))
    out = np.asarray(nll.mean(), dtype=logits.data.dtype)

    def bw(dy):
        d = probs * (dy / n)
        d[rows, tflat] -= dy / n
        _accum(logits, d.reshape(logits.data.shape).astype(logits.data.dtype, copy=False))

    return _record(out, (logits,), bw)


def reflect_pad_left(x: Tensor, pad: int) -> Tensor:
    """Left-pad the last axis by reflection about the first sample.

    [a, b, c] with pad=2 -> [c, b, a, b, c]; pads longer than the signal
    keep reflecting.
    """
    if pad < 0:
        raise ValueError("pad must be >= 0")
    if pad == 0:
        return x
    t = x.data.shape[-1]
    idx = np.pad(np.arange(t), (pad, 0), mode="reflect") if t > 1 else np.zeros(t + pad, dtype=int)

    def bw(dy):
        dy_t = np.moveaxis(dy, -1, 0)
        g = np.zeros((t,) + dy_t.shape[1:], dtype=dy.dtype)
        np.add.at(g, idx, dy_t)
        _accum(x, np.moveaxis(g, 0, -1))

    return _record(x.data[..., idx], (x,), bw)


def causal_conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Causal convolution along the last axis: y[t] = sum_j k[j] * x[t-j].

    x: [..., T]; kernel: [K] or any shape broadcastable against x with K
    on the last axis (e.g. [C, K] against x [..., C, T]). The left edge is
    padded by replicating x[0] so output length equals input length and
    y[t] depends on x[0..t] only (mirror padding would leak x[1..K-1]
    into earlier outputs).
    """
    k = kernel.data.shape[-1]
    t = x.data.shape[-1]
    pad = k - 1
    idx = np.pad(np.arange(t), (pad, 0), mode="edge")
    xp = x.data[..., idx]
    y = np.zeros(np.broadcast_shapes(x.data.shape[:-1], kernel.data.shape[:-1]) + (t,),
                 dtype=x.data.dtype)
    for j in range(k):
        # x[t-j] sits at padded position t+pad-j
        y += kernel.data[..., j:j + 1] * xp[..., pad - j:pad - j + t]
    del xp

    def bw(dy):
        if kernel.requires_grad:
            xp = x.data[..., idx]  # regathered; cheaper than retaining it
            dk = np.empty(kernel.data.shape, dtype=dy.dtype)
            for j in range(k):
                contrib = (dy * xp[..., pad - j:pad - j + t]).sum(axis=-1)
                dk[..., j] = _unbroadcast(contrib, kernel.data.shape[:-1])
            del xp
            _accum(kernel, dk)
        if x.requires_grad:
            dxp = np.zeros(dy.shape[:-1] + (t + pad,), dtype=dy.dtype)
            for j in range(k):
                dxp[..., pad - j:pad - j + t] += kernel.data[..., j:j + 1] * dy
            dxp = _unbroadcast(dxp, x.data.shape[:-1] + (t + pad,))
            dxp_t = np.moveaxis(dxp, -1, 0)
            g = np.zeros((t,) + dxp_t.shape[1:], dtype=dy.dtype)
            np.add.at(g, idx, dxp_t)
            _accum(x, np.moveaxis(g, 0, -1))

    return _record(y, (x, kernel), bw)


def gate_renormalize(attn: Tensor, gate: Tensor, eps: float = 1e-8) -> Tensor:
    """Reweight attention rows by per-key gates and renormalize to sum 1.

    attn: [..., Tq, Tk] (rows nonnegative); gate: [..., Tk] in [0, 1].
    out[i, j] = attn[i, j] * gate[j] / (sum_k attn[i, k] * gate[k] + eps)
    """
    g = gate.data[..., None, :]
    u = attn.data * g
    z = u.sum(axis=-1, keepdims=True) + eps
    y = u / z

    def bw(dy):
        du = (dy - np.sum(dy * y, axis=-1, keepdims=True)) / z
        _accum(attn, du * g)
        _accum(gate, (du * attn.data).sum(axis=-2))

    return _record(y, (attn, gate), bw)


def masked_attention(q: Tensor, k: Tensor, scale: float, mask: np.ndarray | None = None) -> Tensor:
    """Row-softmax of scaled query-key scores without retaining the scores.

    q: [..., Tq, D]; k: [..., Tk, D]; mask: constant additive ndarray
    broadcastable to [..., Tq, Tk]. Equals
    softmax_lastdim(matmul(q * scale, k^T), mask), but the score matrix is
    built, exponentiated, and normalized in one buffer that dies with this
    call; backward rebuilds the score gradient from the softmax output:

        ds = y * (dy - sum_j dy*y),  dq = (ds @ k)*scale,  dk = (ds^T @ q)*scale

    The score matrix is the largest array a self-attention layer touches,
    and composing the two ops keeps two copies of it alive until backward.
    """
    if q.data.ndim < 2 or k.data.ndim < 2:
        raise ValueError("masked_attention operands must be at least 2-D")
    if q.data.shape[-1] != k.data.shape[-1]:
        raise ValueError(f"masked_attention feature dims disagree: {q.data.shape} x {k.data.shape}")
    if mask is not None and np.any(np.all(mask <= -1e8, axis=-1)):
        warnings.warn("masked_attention: fully-masked row, output uniform", RuntimeWarning)
    # a float64 numpy scalar would promote the whole score matrix
    scale = q.data.dtype.type(scale)
    s = np.matmul(q.data * scale, np.swapaxes(k.data, -1, -2))
    if mask is not None:
        s += mask
    s -= s.max(axis=-1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=-1, keepdims=True)
    y = s

    def bw(dy):
        ds = y * (dy - np.sum(dy * y, axis=-1, keepdims=True))
        _accum(q, _unbroadcast(np.matmul(ds, k.data) * scale, q.data.shape))
        _accum(k, _unbroadcast(np.matmul(np.swapaxes(ds, -1, -2), q.data) * scale, k.data.shape))

    return _record(y, (q, k), bw)


def gated_attention_values(attn: Tensor, gate: Tensor | None, v: Tensor,
                           p_drop: float = 0.0, rng: np.random.Generator | None = None,
                           eps: float = 1e-8) -> Tensor:
    """dropout(gate_renormalize(attn, gate)) @ v as one node.

    attn: [..., Tq, Tk] rows nonnegative; gate: [..., Tk] in [0, 1], or
    None to skip the renormalization (ungated attention); v: [..., Tk, D].
    Matches the composed ops bit for bit, including the rng draw, but
    retains neither the renormalized rows, the dropped rows, nor the keep
    mask: backward recomputes the rows from attn/gate and replays the mask
    from the generator state captured before the draw. Composed, those are
    two score-sized activations plus a mask per layer.
    """
    if not 0.0 <= p_drop < 1.0:
        raise ValueError(f"dropout p must be in [0, 1), got {p_drop}")
    if p_drop > 0.0 and rng is None:
        raise ValueError("gated_attention_values with p_drop > 0 needs an rng")
    if attn.data.shape[-1] != v.data.shape[-2]:
        raise ValueError(f"attention/value shapes disagree: {attn.data.shape} x {v.data.shape}")
    if gate is not None and gate.data.shape[-1] != attn.data.shape[-1]:
        raise ValueError(
            f"gate key axis {gate.data.shape[-1]} does not match attention {attn.data.shape[-1]}")

    g = None if gate is None else gate.data[..., None, :]

    def renormalized():
        # y must never alias attn.data when it will be mutated in place
        if g is None:
            return attn.data, None
        y = attn.data * g
        z = y.sum(axis=-1, keepdims=True) + eps
        y /= z
        return y, z

    y, _ = renormalized()
    if p_drop > 0.0:
        bg_cls = type(rng.bit_generator)
        state = rng.bit_generator.state
        keep = rng.random(y.shape) >= p_drop
        drop_scale = np.asarray(1.0 / (1.0 - p_drop), dtype=y.dtype)
        yd = y * keep
        yd *= drop_scale
    else:
        yd = y
    out = np.matmul(yd, v.data)
    del y, yd

    def bw(dy):
        y, z = renormalized()
        if p_drop > 0.0:
            keep = _replay_uniform(bg_cls, state, y.shape) >= p_drop
            yd = y * keep
            yd *= drop_scale
        else:
            keep = None
            yd = y
        _accum(v, _unbroadcast(np.matmul(np.swapaxes(yd, -1, -2), dy), v.data.shape))
        del yd
        dr = np.matmul(dy, np.swapaxes(v.data, -1, -2))  # grad w.r.t. renormalized rows
        if keep is not None:
            dr *= keep
            dr *= drop_scale
            del keep
        if g is None:
            _accum(attn, dr)
        else:
            du = (dr - np.sum(dr * y, axis=-1, keepdims=True)) / z
            del dr, y
            _accum(attn, du * g)
            _accum(gate, (du * attn.data).sum(axis=-2))

    parents = (attn, v) if gate is None else (attn, gate, v)
    return _record(out, parents, bw)


# ---------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------

def grad_check(f, params: dict[str, Tensor], h: float = 1e-6, atol: float = 1e-9) -> float:
    """Compare analytic gradients of scalar f() against central differences.

    f is re-evaluated with perturbed parameter entries; params maps names
    to float64 leaf tensors. Returns the max relative error
    |a - n| / max(|a|, |n|, 1e-8) over every parameter entry. Raises on
    non-finite values, naming the offending parameter.

    Entries where |a - n| < atol count as exact: a central difference at
    h=1e-6 in float64 resolves nothing below ~1e-9 (one ulp of the loss
    over 2h), and a parameter the loss is structurally flat in (e.g. a
    bias feeding a mean-subtracting normalization, whose true gradient is
    identically zero) would otherwise score pure rounding noise against
    the 1e-8 denominator floor.
    """
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise TypeError(f"grad_check requires float64 params, {name!r} is {p.data.dtype}")
        p.grad = None
    with Tape() as tape:
        loss = f()
    base = float(loss.data)
    if not np.isfinite(base):
        raise FloatingPointError("loss is non-finite at the evaluation point")
    backward(loss, tape)
    analytic = {}
    for name, p in params.items():
        analytic[name] = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        if not np.all(np.isfinite(analytic[name])):
            raise FloatingPointError(f"analytic gradient of {name!r} is non-finite")
        p.grad = None

    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f().data)
            flat[i] = orig - h
            f_minus = float(f().data)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError(f"perturbed loss non-finite at {name!r}[{i}]")
            numeric = (f_plus - f_minus) / (2.0 * h)
            diff = abs(aflat[i] - numeric)
            if diff < atol:
                continue
            worst = max(worst, diff / max(abs(aflat[i]), abs(numeric), 1e-8))
    return worst
