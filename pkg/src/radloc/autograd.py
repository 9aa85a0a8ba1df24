"""Minimal reverse-mode automatic differentiation on dense float64 arrays.

Every operation builds a fresh backward closure; the graph lives only
through the Python references between output and input tensors, so it is
freed as soon as the step's tensors go out of scope. Single-threaded per
graph, no locking.
"""

from __future__ import annotations

import numpy as np

EPS_PROB = 1e-12  # probability clamp before any log
EPS_BN = 1e-5     # batch-norm variance epsilon


class Tensor:
    """Dense float64 array plus an optional gradient and backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> np.ndarray:
        """Copy of the values, outside the graph."""
        return self.data.copy()

    def backward(self):
        """Backpropagate from a scalar; accumulates into .grad of all leaves."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def zero_grad(self):
        self.grad = None

    # Small operator sugar; heavier ops are module functions.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Learnable tensor: gradient and momentum buffers always allocated."""

    __slots__ = ("momentum",)

    def __init__(self, data):
        super().__init__(data, requires_grad=True)
        self.grad = np.zeros_like(self.data)
        self.momentum = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad[...] = 0.0


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _node(data, parents, backward) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] > 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _node(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _node(data, (a, b), backward)


def log(x, eps: float = EPS_PROB) -> Tensor:
    x = _as_tensor(x)
    clipped = np.maximum(x.data, eps)
    data = np.log(clipped)

    def backward(g):
        _accumulate(x, g / clipped)

    return _node(data, (x,), backward)


def exp(x) -> Tensor:
    x = _as_tensor(x)
    data = np.exp(x.data)

    def backward(g):
        _accumulate(x, g * data)

    return _node(data, (x,), backward)


def tsum(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(x, np.broadcast_to(g, x.data.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(x, np.broadcast_to(g, x.data.shape).copy())

    return _node(data, (x,), backward)


def tmean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        count = x.data.shape[axis]
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    data = x.data.reshape(shape)

    def backward(g):
        _accumulate(x, g.reshape(x.data.shape))

    return _node(data, (x,), backward)


def concat_rows(tensors) -> Tensor:
    """Concatenate along axis 0."""
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=0)
    sizes = [t.data.shape[0] for t in tensors]

    def backward(g):
        start = 0
        for t, n in zip(tensors, sizes):
            _accumulate(t, g[start:start + n])
            start += n

    return _node(data, tuple(tensors), backward)


def slice_rows(x, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    data = x.data[start:stop].copy()

    def backward(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        _accumulate(x, full)

    return _node(data, (x,), backward)


# ---------------------------------------------------------------------------
# neural-net ops
# ---------------------------------------------------------------------------

def leaky_relu(x, alpha: float = 0.1) -> Tensor:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"leaky_relu alpha must be in (0,1), got {alpha}")
    x = _as_tensor(x)
    positive = x.data > 0
    data = np.where(positive, x.data, alpha * x.data)

    def backward(g):
        _accumulate(x, g * np.where(positive, 1.0, alpha))

    return _node(data, (x,), backward)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    # split by sign to avoid exp overflow
    z = x.data
    data = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))

    def backward(g):
        _accumulate(x, g * data * (1.0 - data))

    return _node(data, (x,), backward)


def softmax(x) -> Tensor:
    """Row softmax with max subtraction; rows sum to 1."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ValueError(f"softmax expects a 2-d batch, got shape {x.data.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=1, keepdims=True)
        _accumulate(x, data * (g - inner))

    return _node(data, (x,), backward)


def linear(x, weight, bias) -> Tensor:
    """Affine map: x @ weight + bias, x: (B, Fin), weight: (Fin, Fout)."""
    x = _as_tensor(x)
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ValueError("linear expects 2-d input and weight")
    if x.data.shape[1] != weight.data.shape[0]:
        raise ValueError(
            f"linear shape mismatch: input {x.data.shape} vs weight {weight.data.shape}"
        )
    data = x.data @ weight.data + bias.data

    def backward(g):
        _accumulate(x, g @ weight.data.T)
        _accumulate(weight, x.data.T @ g)
        _accumulate(bias, g.sum(axis=0))

    return _node(data, (x, weight, bias), backward)


def conv2d(x, weight, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (B,C,H,W) with (F,C,KH,KW) kernels."""
    x = _as_tensor(x)
    if stride < 1:
        raise ValueError(f"conv2d stride must be >= 1, got {stride}")
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv2d expects 4-d input and weight")
    batch, cin, height, width = x.data.shape
    fout, cin_w, kh, kw = weight.data.shape
    if cin != cin_w:
        raise ValueError(
            f"conv2d channel mismatch: input has {cin}, kernel expects {cin_w}"
        )
    hp, wp = height + 2 * padding, width + 2 * padding
    if kh > hp or kw > wp:
        raise ValueError(
            f"conv2d kernel ({kh}x{kw}) larger than padded input ({hp}x{wp})"
        )
    hout = (hp - kh) // stride + 1
    wout = (wp - kw) // stride + 1

    if padding > 0:
        xp = np.zeros((batch, cin, hp, wp))
        xp[:, :, padding:padding + height, padding:padding + width] = x.data
    else:
        xp = x.data

    cols = np.empty((batch, cin, kh, kw, hout, wout))
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * hout:stride,
                                  j:j + stride * wout:stride]
    # one big matmul: (B*L, C*KH*KW) @ (C*KH*KW, F)
    cols2 = cols.transpose(0, 4, 5, 1, 2, 3).reshape(batch * hout * wout, -1)
    wmat = weight.data.reshape(fout, -1)
    out2 = cols2 @ wmat.T + bias.data
    data = out2.reshape(batch, hout, wout, fout).transpose(0, 3, 1, 2)

    def backward(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, fout)
        _accumulate(bias, g2.sum(axis=0))
        _accumulate(weight, (g2.T @ cols2).reshape(weight.data.shape))
        if x.requires_grad:
            dcols2 = g2 @ wmat
            dcols = dcols2.reshape(batch, hout, wout, cin, kh, kw)
            dcols = dcols.transpose(0, 3, 4, 5, 1, 2)
            dxp = np.zeros((batch, cin, hp, wp))
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * hout:stride,
                        j:j + stride * wout:stride] += dcols[:, :, i, j]
            if padding > 0:
                dxp = dxp[:, :, padding:padding + height, padding:padding + width]
            _accumulate(x, dxp)

    return _node(data, (x, weight, bias), backward)


def maxpool2(x) -> Tensor:
    """2x2 max pooling, stride 2; odd edges padded with -inf (never selected)."""
    x = _as_tensor(x)
    if x.data.ndim != 4:
        raise ValueError("maxpool2 expects a 4-d input")
    batch, chans, height, width = x.data.shape
    hp, wp = height + height % 2, width + width % 2
    if (hp, wp) != (height, width):
        xp = np.full((batch, chans, hp, wp), -np.inf)
        xp[:, :, :height, :width] = x.data
    else:
        xp = x.data
    hout, wout = hp // 2, wp // 2
    windows = xp.reshape(batch, chans, hout, 2, wout, 2)
    windows = windows.transpose(0, 1, 2, 4, 3, 5).reshape(batch, chans, hout, wout, 4)
    argmax = windows.argmax(axis=-1)
    data = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    def backward(g):
        dwin = np.zeros_like(windows)
        np.put_along_axis(dwin, argmax[..., None], g[..., None], axis=-1)
        dxp = dwin.reshape(batch, chans, hout, wout, 2, 2)
        dxp = dxp.transpose(0, 1, 2, 4, 3, 5).reshape(batch, chans, hp, wp)
        _accumulate(x, dxp[:, :, :height, :width])

    return _node(data, (x,), backward)


def batch_norm(x, scale, shift, running_mean, running_var, training: bool,
               momentum: float = 0.1, eps: float = EPS_BN) -> Tensor:
    """Batch normalization over (B,F) per feature or (B,C,H,W) per channel.

    Train mode normalizes by batch statistics and updates the running
    arrays in place (biased variance); eval mode uses the running arrays.
    """
    x = _as_tensor(x)
    if x.data.ndim == 2:
        axes, bshape = (0,), (1, -1)
    elif x.data.ndim == 4:
        axes, bshape = (0, 2, 3), (1, -1, 1, 1)
    else:
        raise ValueError(f"batch_norm expects 2-d or 4-d input, got {x.data.shape}")
    count = int(np.prod([x.data.shape[a] for a in axes]))
    gam = scale.data.reshape(bshape)
    bet = shift.data.reshape(bshape)

    if training:
        if count < 2:
            raise ValueError("batch_norm train mode needs at least 2 samples")
        mean = x.data.mean(axis=axes, keepdims=True)
        var = x.data.var(axis=axes, keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.reshape(running_mean.shape)
        running_var *= 1.0 - momentum
        running_var += momentum * var.reshape(running_var.shape)
    else:
        mean = running_mean.reshape(bshape)
        var = running_var.reshape(bshape)

    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * ivar
    data = gam * xhat + bet

    def backward(g):
        _accumulate(scale, (g * xhat).sum(axis=axes).reshape(scale.data.shape))
        _accumulate(shift, g.sum(axis=axes).reshape(shift.data.shape))
        if not x.requires_grad:
            return
        dxhat = g * gam
        if training:
            # compact form for biased batch variance
            term = (dxhat - dxhat.mean(axis=axes, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=axes, keepdims=True))
            _accumulate(x, ivar * term)
        else:
            _accumulate(x, dxhat * ivar)

    return _node(data, (x, scale, shift), backward)


def grad_reverse(x, lam: float) -> Tensor:
    """Identity forward; backward multiplies the incoming gradient by -lam."""
    if lam < 0:
        raise ValueError(f"grad_reverse lambda must be >= 0, got {lam}")
    x = _as_tensor(x)
    data = x.data.copy()

    def backward(g):
        _accumulate(x, -lam * g)

    return _node(data, (x,), backward)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def cross_entropy(pred, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax rows."""
    pred = _as_tensor(pred)
    labels = np.asarray(labels, dtype=np.int64)
    batch, nclass = pred.data.shape
    if labels.shape != (batch,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {batch}")
    if labels.min() < 0 or labels.max() >= nclass:
        raise ValueError("labels out of range")
    rows = np.arange(batch)
    picked = np.maximum(pred.data[rows, labels], EPS_PROB)
    data = -np.log(picked).mean()

    def backward(g):
        dp = np.zeros_like(pred.data)
        dp[rows, labels] = -float(g) / (batch * picked)
        _accumulate(pred, dp)

    return _node(data, (pred,), backward)


def binary_cross_entropy(pred, target, weights=None) -> Tensor:
    """Weighted mean BCE; weights are constants (no gradient through them)."""
    pred = _as_tensor(pred)
    target = np.asarray(target, dtype=np.float64).reshape(pred.data.shape)
    if weights is None:
        weights = np.ones_like(target)
    else:
        weights = np.asarray(weights, dtype=np.float64).reshape(pred.data.shape)
    p = np.clip(pred.data, EPS_PROB, 1.0 - EPS_PROB)
    losses = -(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))
    count = p.size
    data = (weights * losses).sum() / count

    def backward(g):
        _accumulate(pred, float(g) * weights * (p - target) / (p * (1.0 - p)) / count)

    return _node(data, (pred,), backward)
