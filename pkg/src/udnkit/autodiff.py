"""Minimal reverse-mode differentiation for the generator network.

A :class:`Var` wraps an ndarray value plus the closures needed to push
gradients to its parents; :func:`backward` walks the recorded graph once
in reverse topological order.  Only the operations the encoder-decoder
and the measurement loss need are provided.  Every op checks its output
for non-finite values and aborts naming the offending layer.
"""
import numpy as np

from . import kernels


class Var:
    """Graph node: value, accumulated gradient, and the backward hook."""

    __slots__ = ("value", "grad", "parents", "bwd", "name")

    def __init__(self, value, parents=(), bwd=None, name=""):
        self.value = value
        self.grad = None
        self.parents = parents
        self.bwd = bwd
        self.name = name


def _accum(var, g):
    var.grad = g if var.grad is None else var.grad + g


def _check(value, name):
    if not np.isfinite(value).all():
        raise FloatingPointError(f"non-finite activation in layer {name!r}")
    return value


def backward(root):
    """Reverse-mode sweep from a scalar (or any) root Var."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    root.grad = np.ones_like(root.value) if isinstance(root.value, np.ndarray) else 1.0
    for node in reversed(order):
        if node.bwd is not None and node.grad is not None:
            node.bwd(node.grad)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def conv2d(x, w, b, stride=1, name="conv"):
    """Same-padded 2D convolution, stride 1 or 2, with bias."""
    y = kernels.conv2d_forward(x.value, w.value,
                               None if b is None else b.value, stride)
    _check(y, name)
    in_shape = x.value.shape[1:]
    kshape = w.value.shape

    def bwd(g):
        _accum(x, kernels.conv2d_backward_input(g, w.value, stride, in_shape))
        _accum(w, kernels.conv2d_backward_weights(g, x.value, stride, kshape))
        if b is not None:
            _accum(b, g.sum(axis=(1, 2)))

    parents = (x, w) if b is None else (x, w, b)
    return Var(y, parents, bwd, name)


def leaky_relu(x, slope=0.2, name="act"):
    y = _check(np.where(x.value > 0, x.value, slope * x.value), name)

    def bwd(g):
        _accum(x, g * np.where(x.value > 0, x.value.dtype.type(1.0),
                               x.value.dtype.type(slope)))

    return Var(y, (x,), bwd, name)


def sigmoid(x, name="squash"):
    # evaluated in the stable split form to avoid overflow warnings
    v = x.value
    y = np.empty_like(v)
    pos = v >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    y[~pos] = ev / (1.0 + ev)
    _check(y, name)

    def bwd(g):
        _accum(x, g * y * (1.0 - y))

    return Var(y, (x,), bwd, name)


def channel_norm(x, gamma, beta, eps=1e-5, name="norm"):
    """Per-channel standardization over (H, W) with affine parameters.

    Single-sample batch statistics, recomputed every pass; there are no
    running averages because the generator only ever sees one input.
    """
    v = x.value
    C = v.shape[0]
    mu = v.mean(axis=(1, 2), keepdims=True)
    centered = v - mu
    var = (centered * centered).mean(axis=(1, 2), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    y = gamma.value.reshape(C, 1, 1) * xhat + beta.value.reshape(C, 1, 1)
    _check(y, name)

    def bwd(g):
        _accum(beta, g.sum(axis=(1, 2)))
        _accum(gamma, (g * xhat).sum(axis=(1, 2)))
        gh = g * gamma.value.reshape(C, 1, 1)
        m1 = gh.mean(axis=(1, 2), keepdims=True)
        m2 = (gh * xhat).mean(axis=(1, 2), keepdims=True)
        _accum(x, inv * (gh - m1 - xhat * m2))

    return Var(y, (x, gamma, beta), bwd, name)


_UPSAMPLE_CACHE = {}


def _upsample_matrix(n, dtype):
    """(2n, n) bilinear 2x interpolation matrix, edge-clamped."""
    key = (n, np.dtype(dtype))
    if key not in _UPSAMPLE_CACHE:
        U = np.zeros((2 * n, n), dtype=dtype)
        for i in range(n):
            if i == 0:
                U[0, 0] = 1.0
            else:
                U[2 * i, i - 1] = 0.25
                U[2 * i, i] = 0.75
            if i == n - 1:
                U[2 * n - 1, n - 1] = 1.0
            else:
                U[2 * i + 1, i] = 0.75
                U[2 * i + 1, i + 1] = 0.25
        _UPSAMPLE_CACHE[key] = U
    return _UPSAMPLE_CACHE[key]


def upsample2x(x, name="upsample"):
    """Bilinear 2x upsampling of a (C, H, W) tensor along both spatial axes."""
    v = x.value
    C, H, W = v.shape
    UH = _upsample_matrix(H, v.dtype)
    UW = _upsample_matrix(W, v.dtype)
    t = np.tensordot(UH, v, axes=(1, 1)).transpose(1, 0, 2)
    y = np.tensordot(t, UW, axes=(2, 1))
    _check(y, name)

    def bwd(g):
        t2 = np.tensordot(UH.T, g, axes=(1, 1)).transpose(1, 0, 2)
        _accum(x, np.ascontiguousarray(np.tensordot(t2, UW.T, axes=(2, 1))))

    return Var(y, (x,), bwd, name)


def concat_channels(xs, name="skip-concat"):
    y = _check(np.concatenate([x.value for x in xs], axis=0), name)
    sizes = [x.value.shape[0] for x in xs]

    def bwd(g):
        at = 0
        for x, c in zip(xs, sizes):
            _accum(x, g[at:at + c])
            at += c

    return Var(y, tuple(xs), bwd, name)


def measurement_mse(v, model, b, weight=None, name="measurement-loss"):
    """Mean squared error between A v and b over included sensor pixels.

    ``weight`` is an optional binary inclusion mask; the forward model is
    linear with an exact adjoint, so the gradient is A^T of the weighted
    residual.
    """
    resid = model.apply(v.value) - b
    if weight is None:
        count = b.size
        r = resid
    else:
        count = float(weight.sum())
        if count == 0:
            raise ValueError("empty pixel inclusion mask")
        r = resid * weight
    loss = float(np.sum(r.astype(np.float64) * r) / count)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss in {name!r}")

    def bwd(g):
        scale = v.value.dtype.type(2.0 / count) * r
        if weight is not None:
            scale = scale * weight
        _accum(v, g * model.adjoint(scale))

    return Var(loss, (v,), bwd, name)
