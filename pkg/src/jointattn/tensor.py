"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything runs on contiguous numpy arrays in double precision. Each
operation records its inputs and a backward closure on the output tensor;
``Tensor.backward()`` replays the recorded operations in reverse execution
order and accumulates gradients into every tensor that requires them.

Conventions (fixed, so independent re-implementations agree bit-for-bit in
intent):

* ``conv2d`` uses cross-correlation semantics (no kernel flip).
* ``upsample_bilinear`` uses half-pixel source centers
  (``src = (dst + 0.5) / scale - 0.5``), with border clamping.
* Both normalizations use biased variance.
* Gradients accumulate across backward calls until ``zero_grad``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        a, b = v
        return int(a), int(b)
    return int(v), int(v)


def _as_array(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return np.ascontiguousarray(arr)


class Tensor:
    """N-dimensional float64 array with an optional gradient buffer.

    ``grad`` is lazily allocated on first accumulation and has the same
    shape as ``data``. Non-leaf tensors keep references to their parents
    and a backward closure; those references form the tape.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from this scalar through the recorded tape.

        Visits every recorded operation exactly once, in reverse execution
        order (reverse topological order of the graph below this tensor).
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], op: str) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._op = op
    return out


def _reduce_to_shape(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# convolution / pooling


def _conv_out_dim(size: int, k: int, stride: int, pad: int, dil: int) -> int:
    return (size + 2 * pad - dil * (k - 1) - 1) // stride + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, stride, dilation) -> np.ndarray:
    """Extract conv windows from a padded input.

    Returns ``(B, C, Ho, Wo, kh, kw)`` as a strided view (no copy).
    """
    sh, sw = stride
    dh, dw = dilation
    eh = dh * (kh - 1) + 1
    ew = dw * (kw - 1) + 1
    win = sliding_window_view(xp, (eh, ew), axis=(2, 3))
    return win[:, :, ::sh, ::sw, ::dh, ::dw]


def conv2d(x: Tensor, kernel: Tensor, stride=1, padding=0, dilation=1) -> Tensor:
    """2-D cross-correlation of (B,Cin,H,W) with (Cout,Cin,kh,kw).

    Output dims follow ``floor((H + 2*pad - dil*(kh-1) - 1)/stride) + 1``.
    """
    stride, padding, dilation = _pair(stride), _pair(padding), _pair(dilation)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ValueError("conv2d expects 4-D input and kernel")
    B, Ci, H, W = x.shape
    Co, Ck, kh, kw = kernel.shape
    if Ci != Ck:
        raise ValueError(f"conv2d channel mismatch: input has {Ci}, kernel expects {Ck}")
    if stride[0] < 1 or stride[1] < 1:
        raise ValueError("conv2d stride must be >= 1")
    Ho = _conv_out_dim(H, kh, stride[0], padding[0], dilation[0])
    Wo = _conv_out_dim(W, kw, stride[1], padding[1], dilation[1])
    if Ho < 1 or Wo < 1:
        raise ValueError(
            f"conv2d kernel {kh}x{kw} (dilation {dilation}) does not fit "
            f"input {H}x{W} with padding {padding}"
        )
    ph, pw = padding
    if ph or pw:
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    else:
        xp = x.data
    win = _im2col(xp, kh, kw, stride, dilation)
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(B * Ho * Wo, Ci * kh * kw)
    kflat = kernel.data.reshape(Co, Ci * kh * kw)
    out = (cols @ kflat.T).reshape(B, Ho, Wo, Co).transpose(0, 3, 1, 2)
    result = _result(np.ascontiguousarray(out), (x, kernel), "conv2d")

    if result.requires_grad:
        need_x = x.requires_grad
        need_k = kernel.requires_grad
        saved_cols = cols if need_k else None

        def backward(g: np.ndarray) -> None:
            gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(B * Ho * Wo, Co)
            if need_k:
                kernel.accumulate_grad((gmat.T @ saved_cols).reshape(kernel.shape))
            if need_x:
                gcols = (gmat @ kflat).reshape(B, Ho, Wo, Ci, kh, kw)
                gcols = gcols.transpose(0, 3, 4, 5, 1, 2)
                gxp = np.zeros((B, Ci, H + 2 * ph, W + 2 * pw))
                sh, sw = stride
                dh, dw = dilation
                for i in range(kh):
                    for j in range(kw):
                        gxp[:, :, i * dh : i * dh + sh * Ho : sh, j * dw : j * dw + sw * Wo : sw] += gcols[:, :, i, j]
                if ph or pw:
                    gxp = gxp[:, :, ph : ph + H, pw : pw + W]
                x.accumulate_grad(gxp)

        result._backward = backward
    return result


def avg_pool2d(x: Tensor, window, stride=None) -> Tensor:
    """Mean over sliding windows. ``stride`` defaults to the window."""
    wh, ww = _pair(window)
    sh, sw = _pair(stride) if stride is not None else (wh, ww)
    if x.data.ndim != 4:
        raise ValueError("avg_pool2d expects a 4-D input")
    B, C, H, W = x.shape
    if wh > H or ww > W:
        raise ValueError(f"pool window {wh}x{ww} larger than input {H}x{W}")
    win = sliding_window_view(x.data, (wh, ww), axis=(2, 3))[:, :, ::sh, ::sw]
    out = win.mean(axis=(4, 5))
    Ho, Wo = out.shape[2], out.shape[3]
    result = _result(np.ascontiguousarray(out), (x,), "avg_pool2d")

    if result.requires_grad:

        def backward(g: np.ndarray) -> None:
            gx = np.zeros_like(x.data)
            gw = g / (wh * ww)
            for u in range(wh):
                for v in range(ww):
                    gx[:, :, u : u + sh * Ho : sh, v : v + sw * Wo : sw] += gw
            x.accumulate_grad(gx)

        result._backward = backward
    return result


def global_avg_pool(x: Tensor) -> Tensor:
    """Mean over the full spatial extent, yielding (B,C,1,1)."""
    return avg_pool2d(x, (x.shape[2], x.shape[3]))


# ---------------------------------------------------------------------------
# elementwise


def relu(x: Tensor) -> Tensor:
    result = _result(np.maximum(x.data, 0.0), (x,), "relu")
    if result.requires_grad:

        def backward(g: np.ndarray) -> None:
            x.accumulate_grad(g * (x.data > 0))

        result._backward = backward
    return result


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    result = _result(s, (x,), "sigmoid")
    if result.requires_grad:

        def backward(g: np.ndarray) -> None:
            x.accumulate_grad(g * s * (1.0 - s))

        result._backward = backward
    return result


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    result = _result(a.data + b.data, (a, b), "add")
    if result.requires_grad:

        def backward(g: np.ndarray) -> None:
            a.accumulate_grad(g)
            b.accumulate_grad(g)

        result._backward = backward
    return result


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-channel bias (C,) to a (B,C,H,W) activation."""
    if x.data.ndim != 4 or bias.data.ndim != 1 or bias.shape[0] != x.shape[1]:
        raise ValueError(f"bias shape {bias.shape} does not match channels of {x.shape}")
    result = _result(x.data + bias.data[None, :, None, None], (x, bias), "add_channel_bias")
    if result.requires_grad:

        def backward(g: np.ndarray) -> None:
            x.accumulate_grad(g)
            bias.accumulate_grad(g.sum(axis=(0, 2, 3)))

        result._backward = backward
    return result


def _broadcastable_gate(a_shape: tuple[int, ...], b_shape: tuple[int, ...]) -> bool:
    # identical shapes, or a channel gate (C,1,1) / (B,C,1,1) over (B,C,H,W)
    if a_shape == b_shape:
        return True
    if len(a_shape) == 4:
        B, C = a_shape[0], a_shape[1]
        if b_shape in ((C, 1, 1), (B, C, 1, 1), (1, C, 1, 1)):
            return True
    if len(a_shape) == 3 and b_shape == (a_shape[0], 1, 1):
        return True
    return False


def mul_elementwise(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; ``b`` may be a channel gate broadcast over space."""
    if not _broadcastable_gate(a.shape, b.shape):
        raise ValueError(f"mul_elementwise shapes not compatible: {a.shape} vs {b.shape}")
    result = _result(a.data * b.data, (a, b), "mul")
    if result.requires_grad:

        def backward(g: np.ndarray) -> None:
            a.accumulate_grad(_reduce_to_shape(g * b.data, a.shape))
            b.accumulate_grad(_reduce_to_shape(g * a.data, b.shape))

        result._backward = backward
    return result


# ---------------------------------------------------------------------------
# normalization


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-(sample, channel) spatial normalization with biased variance."""
    if x.data.ndim != 4:
        raise ValueError("instance_norm expects a 4-D input")
    if eps <= 0:
        raise ValueError("eps must be positive")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError("gamma/beta must have shape (C,)")
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    var = x.data.var(axis=(2, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    result = _result(out, (x, gamma, beta), "instance_norm")

    if result.requires_grad:

        def backward(g: np.ndarray) -> None:
            beta.accumulate_grad(g.sum(axis=(0, 2, 3)))
            gamma.accumulate_grad((g * xhat).sum(axis=(0, 2, 3)))
            if x.requires_grad:
                gh = g * gamma.data[None, :, None, None]
                m1 = gh.mean(axis=(2, 3), keepdims=True)
                m2 = (gh * xhat).mean(axis=(2, 3), keepdims=True)
                x.accumulate_grad(inv * (gh - m1 - xhat * m2))

        result._backward = backward
    return result


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization over (B,H,W) with biased variance.

    In training mode batch statistics are used and the running buffers are
    updated in place via an exponential moving average; in eval mode the
    running buffers are used as-is (their initial values are mean 0, var 1).
    """
    if x.data.ndim != 4:
        raise ValueError("batch_norm expects a 4-D input")
    C = x.shape[1]
    if gamma.shape != (C,) or beta.shape != (C,):
        raise ValueError("gamma/beta must have shape (C,)")
    if training:
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean
        var = running_var
    inv = 1.0 / np.sqrt(var + eps)[None, :, None, None]
    xhat = (x.data - mu[None, :, None, None]) * inv
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    result = _result(out, (x, gamma, beta), "batch_norm")

    if result.requires_grad:

        def backward(g: np.ndarray) -> None:
            beta.accumulate_grad(g.sum(axis=(0, 2, 3)))
            gamma.accumulate_grad((g * xhat).sum(axis=(0, 2, 3)))
            if x.requires_grad:
                gh = g * gamma.data[None, :, None, None]
                if training:
                    m1 = gh.mean(axis=(0, 2, 3), keepdims=True)
                    m2 = (gh * xhat).mean(axis=(0, 2, 3), keepdims=True)
                    x.accumulate_grad(inv * (gh - m1 - xhat * m2))
                else:
                    x.accumulate_grad(inv * gh)

        result._backward = backward
    return result


# ---------------------------------------------------------------------------
# resampling / loss


def _bilinear_matrix(n_in: int, scale: int) -> np.ndarray:
    """Row-stochastic (n_in*scale, n_in) interpolation matrix.

    Source coordinate for output index i is ``(i + 0.5)/scale - 0.5``,
    linearly blended between its two nearest grid points with clamping at
    the borders (half-pixel-center convention).
    """
    n_out = n_in * scale
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        src = (i + 0.5) / scale - 0.5
        lo = int(np.floor(src))
        t = src - lo
        m[i, min(max(lo, 0), n_in - 1)] += 1.0 - t
        m[i, min(max(lo + 1, 0), n_in - 1)] += t
    return m


def upsample_bilinear(x: Tensor, scale: int) -> Tensor:
    """Bilinear upsampling of (B,C,h,w) by an integer factor."""
    scale = int(scale)
    if scale < 1:
        raise ValueError("scale must be >= 1")
    if x.data.ndim != 4:
        raise ValueError("upsample_bilinear expects a 4-D input")
    if scale == 1:
        wh = np.eye(x.shape[2])
        ww = np.eye(x.shape[3])
    else:
        wh = _bilinear_matrix(x.shape[2], scale)
        ww = _bilinear_matrix(x.shape[3], scale)
    tmp = np.tensordot(x.data, wh, axes=([2], [1]))  # (B,C,W,Ho)
    out = np.tensordot(tmp, ww, axes=([2], [1]))  # (B,C,Ho,Wo)
    result = _result(np.ascontiguousarray(out), (x,), "upsample_bilinear")

    if result.requires_grad:

        def backward(g: np.ndarray) -> None:
            tmp_g = np.tensordot(g, wh, axes=([2], [0]))  # (B,C,Wo,h)
            gx = np.tensordot(tmp_g, ww, axes=([2], [0]))  # (B,C,h,w)
            x.accumulate_grad(np.ascontiguousarray(gx))

        result._backward = backward
    return result


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over all elements of the squared difference (a scalar tensor)."""
    if pred.shape != target.shape:
        raise ValueError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    result = _result(np.asarray(np.mean(diff * diff)), (pred, target), "mse_loss")
    n = pred.data.size

    if result.requires_grad:

        def backward(g: np.ndarray) -> None:
            scaled = (2.0 / n) * float(g.reshape(())) * diff
            pred.accumulate_grad(scaled)
            target.accumulate_grad(-scaled)

        result._backward = backward
    return result
