"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Supplies exactly the operator set the spiking networks need, including the
binary spike nonlinearity whose backward pass uses an Atan-shaped surrogate
derivative. Graphs are tape-free: each Tensor remembers its parents and a
closure that scatters its gradient back to them; ``backward`` runs a reverse
topological sweep and may be called once per graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Tensor",
    "SurrogateSpec",
    "atan_surrogate_grad",
    "conv2d",
    "transposed_conv2d",
    "solve_transposed_conv_geometry",
    "batch_norm",
    "concat",
    "elementwise_add",
    "elementwise_mul",
    "scalar_mul",
    "linear",
    "avg_pool2d",
    "max_pool2d",
    "spatial_mean",
    "softmax",
    "relu",
    "sigmoid",
    "log",
    "power",
    "spike",
    "tsum",
    "tmean",
    "reshape",
]


@dataclass(frozen=True)
class SurrogateSpec:
    """Surrogate derivative used in place of the spike step function."""

    kind: str = "atan"
    alpha: float = 2.0

    def __post_init__(self):
        if self.kind != "atan":
            raise ValueError(f"unknown surrogate kind {self.kind!r}")
        if self.alpha <= 0:
            raise ValueError("surrogate alpha must be positive")


def atan_surrogate_grad(x: np.ndarray, alpha: float) -> np.ndarray:
    """s'(x) = alpha / (2 * (1 + (pi/2 * alpha * x)^2))."""
    return alpha / (2.0 * (1.0 + (math.pi / 2.0 * alpha * x) ** 2))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self._consumed = False
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-topological gradient accumulation from a scalar loss."""
        if self.data.size != 1:
            raise ValueError("backward requires a scalar tensor")
        if self._consumed:
            raise RuntimeError("graph already consumed by a previous backward")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            node._consumed = True


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents, backward) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accum(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum gradient g down to the given (broadcast source) shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


# --- elementwise ------------------------------------------------------------


def elementwise_add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(data, (a, b), backward)


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(data, (a, b), backward)


def scalar_mul(a: Tensor, c: float) -> Tensor:
    a = _as_tensor(a)
    data = a.data * c

    def backward(g):
        _accum(a, g * c)

    return _make(data, (a,), backward)


def _sub(a: Tensor, b: Tensor) -> Tensor:
    return elementwise_add(a, scalar_mul(b, -1.0))


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0
    data = x.data * mask

    def backward(g):
        _accum(x, g * mask)

    return _make(data, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    s = 1.0 / (1.0 + np.exp(-x.data))

    def backward(g):
        _accum(x, g * s * (1.0 - s))

    return _make(s, (x,), backward)


def log(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.log(x.data)

    def backward(g):
        _accum(x, g / x.data)

    return _make(data, (x,), backward)


def power(x: Tensor, exponent: float) -> Tensor:
    """x ** exponent for non-negative bases."""
    x = _as_tensor(x)
    data = np.power(x.data, exponent)

    def backward(g):
        _accum(x, g * exponent * np.power(x.data, exponent - 1.0))

    return _make(data, (x,), backward)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(ge, x.data.shape).copy())

    return _make(data, (x,), backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.data.shape[a] for a in axes]))
    return scalar_mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    data = x.data.reshape(shape)

    def backward(g):
        _accum(x, g.reshape(x.data.shape))

    return _make(data, (x,), backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat requires at least one tensor")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(t, g[tuple(idx)])

    return _make(data, tensors, backward)


# --- linear algebra ---------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x [N, Din] @ weight.T [Din, Dout] + bias."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        _accum(x, g @ weight.data)
        _accum(weight, g.T @ x.data)
        if bias is not None:
            _accum(bias, g.sum(axis=0))

    return _make(data, parents, backward)


# --- convolution ------------------------------------------------------------


def _conv_windows(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """Strided sliding windows of a padded NCHW array -> [N,C,Ho,Wo,kh,kw]."""
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::sh, ::sw]


def _corr_forward(xp, w, stride):
    sh, sw = stride
    kh, kw = w.shape[2], w.shape[3]
    win = _conv_windows(xp, kh, kw, sh, sw)
    return np.einsum("nchwij,ocij->nohw", win, w, optimize=True)


def _corr_weight_grad(xp, gy, w_shape, stride):
    sh, sw = stride
    kh, kw = w_shape[2], w_shape[3]
    win = _conv_windows(xp, kh, kw, sh, sw)
    return np.einsum("nchwij,nohw->ocij", win, gy, optimize=True)


def _corr_input_grad(gy, w, xp_hw, stride):
    """Adjoint of _corr_forward w.r.t. the padded input."""
    sh, sw = stride
    n = gy.shape[0]
    cin, kh, kw = w.shape[1], w.shape[2], w.shape[3]
    ho, wo = gy.shape[2], gy.shape[3]
    gxp = np.zeros((n, cin, xp_hw[0], xp_hw[1]), dtype=np.float64)
    for i in range(kh):
        for j in range(kw):
            contrib = np.einsum("nohw,oc->nchw", gy, w[:, :, i, j], optimize=True)
            gxp[:, :, i : i + ho * sh : sh, j : j + wo * sw : sw] += contrib
    return gxp


def _pad_hw(x, pad):
    ph, pw = pad
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))


def _unpad_hw(x, pad, out_hw):
    ph, pw = pad
    return x[:, :, ph : ph + out_hw[0], pw : pw + out_hw[1]]


def _pair(v):
    return (v, v) if isinstance(v, int) else tuple(v)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of [N,Cin,H,W] with [Cout,Cin,kh,kw]."""
    x, weight = _as_tensor(x), _as_tensor(weight)
    stride, padding = _pair(stride), _pair(padding)
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weight")
    if x.data.shape[1] != weight.data.shape[1]:
        raise ValueError("conv2d channel mismatch")
    kh, kw = weight.data.shape[2:]
    h_in = x.data.shape[2] + 2 * padding[0]
    w_in = x.data.shape[3] + 2 * padding[1]
    if h_in < kh or w_in < kw:
        raise ValueError("kernel larger than padded input")
    xp = _pad_hw(x.data, padding)
    data = _corr_forward(xp, weight.data, stride)
    if bias is not None:
        data = data + bias.data[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)
    in_hw = x.data.shape[2:]

    def backward(g):
        gxp = _corr_input_grad(g, weight.data, xp.shape[2:], stride)
        _accum(x, _unpad_hw(gxp, padding, in_hw))
        _accum(weight, _corr_weight_grad(xp, g, weight.data.shape, stride))
        if bias is not None:
            _accum(bias, g.sum(axis=(0, 2, 3)))

    return _make(data, parents, backward)


def solve_transposed_conv_geometry(in_hw, target_hw, max_stride: int = 8):
    """Find (stride, kernel, output_padding, padding=1) hitting target_hw.

    out = (in - 1) * s - 2 * p + k + op, per-axis op in [0, s).
    Raises ValueError when no (s, k) combination reaches the target.
    """
    (h, w), (th, tw) = in_hw, target_hw
    if th < h or tw < w:
        raise ValueError("target spatial dims must be >= input dims")
    p = 1
    for s in range(1, max_stride + 1):
        for k in range(1, 8):
            op_h = th - ((h - 1) * s - 2 * p + k)
            op_w = tw - ((w - 1) * s - 2 * p + k)
            if 0 <= op_h < s and 0 <= op_w < s:
                return s, k, (op_h, op_w), p
    raise ValueError(f"no transposed-conv geometry maps {in_hw} to {target_hw}")


def transposed_conv2d(
    x: Tensor,
    weight: Tensor,
    stride=1,
    padding=0,
    output_padding=0,
    bias: Tensor | None = None,
) -> Tensor:
    """Adjoint of conv2d: forward equals conv2d's backward-input map.

    ``weight`` has conv layout [Cout, Cin, kh, kw]; the input carries Cout
    channels and the output Cin channels, upsampled by ``stride``.
    """
    x, weight = _as_tensor(x), _as_tensor(weight)
    stride, padding, output_padding = _pair(stride), _pair(padding), _pair(output_padding)
    if x.data.shape[1] != weight.data.shape[0]:
        raise ValueError("transposed_conv2d channel mismatch")
    if any(op >= s for op, s in zip(output_padding, stride)):
        raise ValueError("output_padding must be smaller than stride")
    n, _, h, w = x.data.shape
    kh, kw = weight.data.shape[2:]
    out_h = (h - 1) * stride[0] - 2 * padding[0] + kh + output_padding[0]
    out_w = (w - 1) * stride[1] - 2 * padding[1] + kw + output_padding[1]
    if out_h <= 0 or out_w <= 0:
        raise ValueError("non-positive transposed-conv output shape")
    pad_hw = (out_h + 2 * padding[0], out_w + 2 * padding[1])
    full = _corr_input_grad(x.data, weight.data, pad_hw, stride)
    data = _unpad_hw(full, padding, (out_h, out_w))
    if bias is not None:
        data = data + bias.data[None, :, None, None]
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gp = _pad_hw(g, padding)
        _accum(x, _corr_forward(gp, weight.data, stride))
        _accum(weight, _corr_weight_grad(gp, x.data, weight.data.shape, stride))
        if bias is not None:
            _accum(bias, g.sum(axis=(0, 2, 3)))

    return _make(data, parents, backward)


# --- normalization and pooling ----------------------------------------------


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of NCHW input over the (N, H, W) axes.

    In training mode batch statistics are used and the running buffers are
    updated in place: running <- momentum * running + (1 - momentum) * batch.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    if x.data.ndim != 4:
        raise ValueError("batch_norm expects NCHW input")
    if gamma.data.shape != (x.data.shape[1],) or beta.data.shape != (x.data.shape[1],):
        raise ValueError("batch_norm parameter shape mismatch")
    axes = (0, 2, 3)
    m = x.data.shape[0] * x.data.shape[2] * x.data.shape[3]
    if training:
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    data = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    def backward(g):
        _accum(gamma, (g * xhat).sum(axis=axes))
        _accum(beta, g.sum(axis=axes))
        gs = g * gamma.data[None, :, None, None]
        if training:
            # standard batch-norm backward through batch statistics
            sum_gs = gs.sum(axis=axes)[None, :, None, None]
            sum_gs_xhat = (gs * xhat).sum(axes)[None, :, None, None]
            gx = (inv_std[None, :, None, None] / m) * (m * gs - sum_gs - xhat * sum_gs_xhat)
        else:
            gx = gs * inv_std[None, :, None, None]
        _accum(x, gx)

    return _make(data, (x, gamma, beta), backward)


def avg_pool2d(x: Tensor, kernel: int) -> Tensor:
    """Non-overlapping average pooling; trailing rows/cols are dropped."""
    x = _as_tensor(x)
    n, c, h, w = x.data.shape
    ho, wo = h // kernel, w // kernel
    view = x.data[:, :, : ho * kernel, : wo * kernel].reshape(n, c, ho, kernel, wo, kernel)
    data = view.mean(axis=(3, 5))

    def backward(g):
        gx = np.zeros_like(x.data)
        spread = np.repeat(np.repeat(g, kernel, axis=2), kernel, axis=3) / (kernel * kernel)
        gx[:, :, : ho * kernel, : wo * kernel] = spread
        _accum(x, gx)

    return _make(data, (x,), backward)


def max_pool2d(x: Tensor, kernel: int) -> Tensor:
    """Non-overlapping max pooling; ties route gradient to the first max."""
    x = _as_tensor(x)
    n, c, h, w = x.data.shape
    ho, wo = h // kernel, w // kernel
    view = x.data[:, :, : ho * kernel, : wo * kernel].reshape(n, c, ho, kernel, wo, kernel)
    flat = view.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, kernel * kernel)
    arg = flat.argmax(axis=-1)
    data = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, arg[..., None], g[..., None], axis=-1)
        gview = gflat.reshape(n, c, ho, wo, kernel, kernel).transpose(0, 1, 2, 4, 3, 5)
        gx = np.zeros_like(x.data)
        gx[:, :, : ho * kernel, : wo * kernel] = gview.reshape(n, c, ho * kernel, wo * kernel)
        _accum(x, gx)

    return _make(data, (x,), backward)


def spatial_mean(x: Tensor) -> Tensor:
    """Global average pool: NCHW -> NC."""
    x = _as_tensor(x)
    n, c, h, w = x.data.shape
    data = x.data.mean(axis=(2, 3))

    def backward(g):
        _accum(x, np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape).copy())

    return _make(data, (x,), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accum(x, y * (g - dot))

    return _make(y, (x,), backward)


def spike(x: Tensor, surrogate: SurrogateSpec) -> Tensor:
    """Heaviside firing (1 where x >= 0) with Atan surrogate backward.

    Forward output is exactly binary; the straight-through pair is a single
    op so callers cannot mismatch forward and backward rules.
    """
    x = _as_tensor(x)
    data = (x.data >= 0).astype(np.float64)

    def backward(g):
        _accum(x, g * atan_surrogate_grad(x.data, surrogate.alpha))

    return _make(data, (x,), backward)
