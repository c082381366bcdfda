"""Minimal reverse-mode autodiff over numpy arrays.

Tensors store float32 by default; gradient checking runs the same graph in
float64. The tape is implicit: each non-leaf tensor keeps a closure that
scatters its output gradient into its parents, and ``backward`` walks the
graph once in reverse topological order.
"""

import numpy as np

from . import backend
from .errors import CheckFailed, InvalidKernel, SequenceTooShort, ShapeError


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad = None
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar output")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _track(out_data, parents, backward):
    """Wrap op output; records the tape edge only when a parent needs grads."""
    needs = [p for p in parents if p.requires_grad or p._backward is not None]
    out = Tensor(out_data)
    if needs:
        out.requires_grad = True
        out._parents = tuple(needs)
        out._backward = backward
    return out


def _accum(t, g):
    if not (t.requires_grad or t._backward is not None):
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype)
    else:
        t.grad = t.grad + np.asarray(g, dtype=t.data.dtype)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise and scalar ops
# ---------------------------------------------------------------------------

def add(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"add shape mismatch {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        _accum(a, g)
        _accum(b, g)

    return _track(a.data + b.data, (a, b), bwd)


def sub(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub shape mismatch {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        _accum(a, g)
        _accum(b, -g)

    return _track(a.data - b.data, (a, b), bwd)


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shape mismatch {a.data.shape} vs {b.data.shape}")

    def bwd(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _track(a.data * b.data, (a, b), bwd)


def add_const(a, c):
    def bwd(g):
        _accum(a, g)

    return _track(a.data + c, (a,), bwd)


def mul_const(a, c):
    def bwd(g):
        _accum(a, g * c)

    return _track(a.data * c, (a,), bwd)


def tanh(a):
    out = np.tanh(a.data)

    def bwd(g):
        _accum(a, g * (1.0 - out * out))

    return _track(out, (a,), bwd)


def sqrt(a):
    out = np.sqrt(a.data)

    def bwd(g):
        _accum(a, g * 0.5 / np.maximum(out, np.finfo(out.dtype).tiny))

    return _track(out, (a,), bwd)


def ssum(terms):
    """Sum a list of same-shape tensors (used for scalar accumulation)."""
    acc = terms[0]
    for t in terms[1:]:
        acc = add(acc, t)
    return acc


def sum_all(a):
    def bwd(g):
        _accum(a, np.broadcast_to(g, a.data.shape))

    return _track(a.data.sum(dtype=np.float64).astype(a.data.dtype), (a,), bwd)


# ---------------------------------------------------------------------------
# shape ops
# ---------------------------------------------------------------------------

def reshape(a, shape):
    def bwd(g):
        _accum(a, g.reshape(a.data.shape))

    return _track(a.data.reshape(shape), (a,), bwd)


def transpose(a, axes):
    inv = np.argsort(axes)

    def bwd(g):
        _accum(a, np.transpose(g, inv))

    return _track(np.ascontiguousarray(np.transpose(a.data, axes)), (a,), bwd)


def pad_axis(a, axis, before, after, fill=0.0):
    pads = [(0, 0)] * a.data.ndim
    pads[axis] = (before, after)
    out = np.pad(a.data, pads, constant_values=fill)
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(before, before + a.data.shape[axis])
    sl = tuple(sl)

    def bwd(g):
        _accum(a, g[sl])

    return _track(out, (a,), bwd)


def slice_axis(a, axis, start, stop):
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def bwd(g):
        gx = np.zeros_like(a.data)
        gx[sl] = g
        _accum(a, gx)

    return _track(np.ascontiguousarray(a.data[sl]), (a,), bwd)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def linear(x, w, b):
    """Affine map over the last axis: y[..., o] = sum_i x[..., i] w[o, i] + b[o]."""
    if x.data.shape[-1] != w.data.shape[1]:
        raise ShapeError(
            f"linear: input dim {x.data.shape[-1]} != weight dim {w.data.shape[1]}"
        )
    out = x.data @ w.data.T + b.data

    def bwd(g):
        _accum(x, g @ w.data)
        gm = g.reshape(-1, g.shape[-1])
        xm = x.data.reshape(-1, x.data.shape[-1])
        _accum(w, gm.T @ xm)
        _accum(b, gm.sum(axis=0))

    return _track(out, (x, w, b), bwd)


def linear_nb(x, w):
    """Like ``linear`` but without a bias term."""
    if x.data.shape[-1] != w.data.shape[1]:
        raise ShapeError(
            f"linear: input dim {x.data.shape[-1]} != weight dim {w.data.shape[1]}"
        )
    out = x.data @ w.data.T

    def bwd(g):
        _accum(x, g @ w.data)
        _accum(w, g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.data.shape[-1]))

    return _track(out, (x, w), bwd)


def bmm(a, b):
    """Batched matmul with identical leading dims."""
    out = np.matmul(a.data, b.data)

    def bwd(g):
        _accum(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        _accum(b, np.matmul(np.swapaxes(a.data, -1, -2), g))

    return _track(out, (a, b), bwd)


def softmax(a, axis=-1, mask=None):
    """Numerically stable softmax; ``mask`` (True = excluded) zeroes positions.

    Rows with every position masked produce all-zero output.
    """
    x = a.data
    if mask is not None:
        x = np.where(mask, -np.inf, x)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)  # all-masked rows
    e = np.exp(x - m)
    denom = e.sum(axis=axis, keepdims=True, dtype=np.float64)
    out = np.where(denom > 0, e / np.maximum(denom, 1e-300), 0.0).astype(a.data.dtype)

    def bwd(g):
        inner = (g * out).sum(axis=axis, keepdims=True, dtype=np.float64).astype(g.dtype)
        _accum(a, out * (g - inner))

    return _track(out, (a,), bwd)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True, dtype=np.float64)
    var = np.square(x.data.astype(np.float64) - mu).mean(axis=-1, keepdims=True)
    inv = (1.0 / np.sqrt(var + eps)).astype(x.data.dtype)
    xhat = ((x.data - mu) * inv).astype(x.data.dtype)
    out = xhat * gamma.data + beta.data

    def bwd(g):
        d = x.data.shape[-1]
        gxhat = g * gamma.data
        t1 = gxhat.sum(axis=-1, keepdims=True, dtype=np.float64)
        t2 = (gxhat * xhat).sum(axis=-1, keepdims=True, dtype=np.float64)
        gx = (inv / d) * (d * gxhat - t1 - xhat * t2)
        _accum(x, gx.astype(x.data.dtype))
        _accum(gamma, (g * xhat).reshape(-1, d).sum(axis=0, dtype=np.float64))
        _accum(beta, g.reshape(-1, d).sum(axis=0, dtype=np.float64))

    return _track(out, (x, gamma, beta), bwd)


def scaled_dot_attention(q, k, v, mask=None):
    """Single-head scaled dot-product attention over [B', T, D].

    ``mask`` is boolean [B', T]; True marks keys to exclude. Rows whose keys
    are all masked yield zero output.
    """
    d = q.data.shape[-1]
    scale = 1.0 / np.sqrt(d)
    scores = np.matmul(q.data, np.swapaxes(k.data, -1, -2)) * scale
    kmask = None if mask is None else mask[:, None, :]
    if kmask is not None:
        scores = np.where(kmask, -np.inf, scores)
    m = np.max(scores, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(scores - m)
    denom = e.sum(axis=-1, keepdims=True, dtype=np.float64)
    attn = np.where(denom > 0, e / np.maximum(denom, 1e-300), 0.0).astype(q.data.dtype)
    out = np.matmul(attn, v.data)

    def bwd(g):
        gattn = np.matmul(g, np.swapaxes(v.data, -1, -2))
        inner = (gattn * attn).sum(axis=-1, keepdims=True, dtype=np.float64).astype(g.dtype)
        gscores = attn * (gattn - inner)
        _accum(q, np.matmul(gscores, k.data) * scale)
        _accum(k, np.matmul(np.swapaxes(gscores, -1, -2), q.data) * scale)
        _accum(v, np.matmul(np.swapaxes(attn, -1, -2), g))

    return _track(out, (q, k, v), bwd)


# ---------------------------------------------------------------------------
# convolution ops (hot kernels live in backend.py)
# ---------------------------------------------------------------------------

def conv1d_strided(x, w, b):
    """Stride-2 kernel-2 1D conv: [B,C,L] -> [B,O,floor(L/2)]."""
    if x.data.shape[2] < 2:
        raise SequenceTooShort(f"conv1d needs length >= 2, got {x.data.shape[2]}")
    out = backend.conv1d_forward(x.data, w.data, b.data)

    def bwd(g):
        gx, gw, gb = backend.conv1d_backward(g, x.data, w.data)
        _accum(x, gx)
        _accum(w, gw)
        _accum(b, gb)

    return _track(out, (x, w, b), bwd)


def conv2d_segments(x, w, b):
    """Full-width segment conv: [B,N,l,C] -> [B,N,O], zero-padded segment axis."""
    if w.data.shape[1] % 2 == 0:
        raise InvalidKernel(f"segment kernel must be odd, got {w.data.shape[1]}")
    out = backend.segconv_forward(x.data, w.data, b.data)

    def bwd(g):
        gx, gw, gb = backend.segconv_backward(g, x.data, w.data)
        _accum(x, gx)
        _accum(w, gw)
        _accum(b, gb)

    return _track(out, (x, w, b), bwd)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------

def grad_check(f, params, eps=1e-3, samples_per_tensor=None, rng=None):
    """Max relative error between reverse-mode grads and central differences.

    ``f`` is a zero-argument callable returning a scalar Tensor built from
    ``params``, which must be float64 leaves. With ``samples_per_tensor`` set,
    only that many coordinates per tensor are probed (seeded by ``rng``).
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise CheckFailed("grad_check requires float64 parameters")
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.data).all():
        raise CheckFailed("loss is non-finite")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    rng = rng or np.random.default_rng(0)
    max_rel = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if samples_per_tensor is None or samples_per_tensor >= n:
            idxs = range(n)
        else:
            idxs = rng.choice(n, size=samples_per_tensor, replace=False)
        aflat = a.reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            hi = f().data.item()
            flat[i] = orig - eps
            lo = f().data.item()
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise CheckFailed("loss non-finite during finite differencing")
            numeric = (hi - lo) / (2.0 * eps)
            denom = max(abs(aflat[i]) + abs(numeric), 1e-8)
            max_rel = max(max_rel, abs(aflat[i] - numeric) / denom)
    return max_rel
