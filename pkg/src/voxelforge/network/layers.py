"""3-D layers with explicit backward passes.

Tensors are (batch, channel, depth, height, width). Convolutions use an
im2col layout so both passes reduce to one matrix product each.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatchError


@dataclass
class Conv3Params:
    weights: np.ndarray  # (c_out, c_in, kd, kh, kw)
    bias: np.ndarray  # (c_out,)
    stride: int = 1
    dilation: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weights.ndim != 5:
            raise ShapeMismatchError("conv weights must be (c_out, c_in, kd, kh, kw)")
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatchError("bias length must equal c_out")
        if self.stride < 1 or self.dilation < 1 or self.padding < 0:
            raise ValueError("stride and dilation must be >= 1, padding >= 0")


def conv_output_size(n, k, stride=1, dilation=1, padding=0):
    return (n + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _out_dims(x, p: Conv3Params):
    if x.ndim != 5:
        raise ShapeMismatchError(f"expected a 5-D tensor, got shape {x.shape}")
    if x.shape[1] != p.weights.shape[1]:
        raise ShapeMismatchError(f"input has {x.shape[1]} channels, kernel expects {p.weights.shape[1]}")
    dims = tuple(
        conv_output_size(n, k, p.stride, p.dilation, p.padding) for n, k in zip(x.shape[2:], p.weights.shape[2:])
    )
    if min(dims) < 1:
        raise ShapeMismatchError(f"kernel does not fit input {x.shape[2:]}")
    return dims


def _window(start, count, stride):
    return slice(start, start + stride * (count - 1) + 1, stride)


def im2col(x, p: Conv3Params):
    """Columns (c_in*kd*kh*kw, n*od*oh*ow) for input ``x``."""
    n, ci = x.shape[:2]
    kd, kh, kw = p.weights.shape[2:]
    od, oh, ow = _out_dims(x, p)
    pad = p.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((ci, kd, kh, kw, n, od, oh, ow), dtype=x.dtype)
    s, dl = p.stride, p.dilation
    for a in range(kd):
        for b in range(kh):
            for c in range(kw):
                patch = xp[:, :, _window(a * dl, od, s), _window(b * dl, oh, s), _window(c * dl, ow, s)]
                cols[:, a, b, c] = patch.transpose(1, 0, 2, 3, 4)
    return cols.reshape(ci * kd * kh * kw, n * od * oh * ow), (od, oh, ow)


def col2im(cols, x_shape, p: Conv3Params, out_dims):
    n, ci, d, h, w = x_shape
    kd, kh, kw = p.weights.shape[2:]
    od, oh, ow = out_dims
    pad = p.padding
    gxp = np.zeros((n, ci, d + 2 * pad, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols = cols.reshape(ci, kd, kh, kw, n, od, oh, ow)
    s, dl = p.stride, p.dilation
    for a in range(kd):
        for b in range(kh):
            for c in range(kw):
                win = (slice(None), slice(None), _window(a * dl, od, s), _window(b * dl, oh, s), _window(c * dl, ow, s))
                gxp[win] += cols[:, a, b, c].transpose(1, 0, 2, 3, 4)
    if pad:
        gxp = gxp[:, :, pad:-pad, pad:-pad, pad:-pad]
    return gxp


def _forward_cols(cols, out_dims, n, p: Conv3Params):
    co = p.weights.shape[0]
    out = p.weights.reshape(co, -1) @ cols
    out = out.reshape(co, n, *out_dims).transpose(1, 0, 2, 3, 4)
    return np.ascontiguousarray(out) + p.bias.reshape(1, co, 1, 1, 1)


def _backward_cols(cols, x_shape, out_dims, p: Conv3Params, grad_out):
    co = p.weights.shape[0]
    g = grad_out.transpose(1, 0, 2, 3, 4).reshape(co, -1)
    grad_w = (g @ cols.T).reshape(p.weights.shape)
    grad_b = g.sum(axis=1)
    grad_x = col2im(p.weights.reshape(co, -1).T @ g, x_shape, p, out_dims)
    return grad_x, grad_w, grad_b


def conv3d_forward(x, p: Conv3Params):
    """Dilated, strided 3-D cross-correlation plus bias."""
    cols, dims = im2col(x, p)
    return _forward_cols(cols, dims, x.shape[0], p)


def conv3d_backward(x, p: Conv3Params, grad_out):
    """(grad_x, grad_w, grad_b) of ``conv3d_forward(x, p)`` given dL/d(out)."""
    cols, dims = im2col(x, p)
    if grad_out.shape != (x.shape[0], p.weights.shape[0], *dims):
        raise ShapeMismatchError(f"grad_out {grad_out.shape} does not match forward output")
    return _backward_cols(cols, x.shape, dims, p, grad_out)


# ------------------------------------------------------------------ modules


class Module:
    """Minimal layer protocol: ``forward`` caches what ``backward`` needs;
    ``backward`` returns dL/dx and accumulates parameter gradients."""

    def local_params(self):
        return []  # (name, value, grad) triples

    def named_children(self):
        return []

    def named_params(self, prefix=""):
        out = [(prefix + n, v, g) for n, v, g in self.local_params()]
        for name, child in self.named_children():
            out += child.named_params(f"{prefix}{name}.")
        return out

    def zero_grad(self):
        for _, _, g in self.named_params():
            g[...] = 0


class Conv3d(Module):
    def __init__(self, c_in, c_out, k=3, stride=1, dilation=1, padding=None, rng=None, dtype=np.float32, gain=1.0):
        rng = rng if rng is not None else np.random.default_rng(0)
        if padding is None:
            padding = dilation * (k - 1) // 2
        fan_in = c_in * k**3
        w = rng.standard_normal((c_out, c_in, k, k, k)) * (gain * np.sqrt(2.0 / fan_in))
        self.p = Conv3Params(w.astype(dtype), np.zeros(c_out, dtype=dtype), stride, dilation, padding)
        self.grad_w = np.zeros_like(self.p.weights)
        self.grad_b = np.zeros_like(self.p.bias)
        self._cache = None

    def local_params(self):
        return [("weight", self.p.weights, self.grad_w), ("bias", self.p.bias, self.grad_b)]

    def forward(self, x):
        cols, dims = im2col(x, self.p)
        self._cache = (cols, x.shape, dims)
        return _forward_cols(cols, dims, x.shape[0], self.p)

    def backward(self, g):
        cols, x_shape, dims = self._cache
        gx, gw, gb = _backward_cols(cols, x_shape, dims, self.p, g)
        self.grad_w += gw
        self.grad_b += gb
        return gx


class ReLU(Module):
    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, g):
        return g * self._mask


def relu(x):
    return np.maximum(x, 0)


class ResBlock(Module):
    """conv -> relu -> conv, plus identity skip, then relu."""

    def __init__(self, channels, dilation=1, rng=None, dtype=np.float32):
        self.conv1 = Conv3d(channels, channels, 3, 1, dilation, rng=rng, dtype=dtype)
        self.conv2 = Conv3d(channels, channels, 3, 1, dilation, rng=rng, dtype=dtype)
        self.act1 = ReLU()
        self.act2 = ReLU()

    def named_children(self):
        return [("conv1", self.conv1), ("conv2", self.conv2)]

    def forward(self, x):
        if x.shape[1] != self.conv1.p.weights.shape[1]:
            raise ShapeMismatchError("resnet block input channels differ from block width")
        h = self.act1.forward(self.conv1.forward(x))
        return self.act2.forward(self.conv2.forward(h) + x)

    def backward(self, g):
        g = self.act2.backward(g)
        gh = self.conv2.backward(g)
        return self.conv1.backward(self.act1.backward(gh)) + g


def resnet_block(x, conv1: Conv3Params, conv2: Conv3Params):
    """Functional form of ResBlock on explicit parameters."""
    if not (x.shape[1] == conv1.weights.shape[0] == conv2.weights.shape[0]):
        raise ShapeMismatchError("resnet block needs equal input and output channels")
    h = relu(conv3d_forward(x, conv1))
    return relu(conv3d_forward(h, conv2) + x)


class Sequential(Module):
    def __init__(self, *layers):
        self.layers = list(layers)

    def named_children(self):
        return [(str(i), m) for i, m in enumerate(self.layers) if m.named_params()]

    def forward(self, x):
        for m in self.layers:
            x = m.forward(x)
        return x

    def backward(self, g):
        for m in reversed(self.layers):
            g = m.backward(g)
        return g


class Upsample(Module):
    """Nearest-neighbour x2 upsampling, cropped to a target spatial size."""

    def forward(self, x, size):
        self._in_shape = x.shape
        up = x.repeat(2, axis=2).repeat(2, axis=3).repeat(2, axis=4)
        return up[:, :, : size[0], : size[1], : size[2]]

    def backward(self, g):
        n, c, d, h, w = self._in_shape
        full = np.zeros((n, c, 2 * d, 2 * h, 2 * w), dtype=g.dtype)
        full[:, :, : g.shape[2], : g.shape[3], : g.shape[4]] = g
        return full.reshape(n, c, d, 2, h, 2, w, 2).sum(axis=(3, 5, 7))


# ------------------------------------------------------------ softmax / loss


def softmax_channels(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_channels(x):
    z = x - x.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def one_hot(labels, num_classes=12, dtype=np.float32):
    """(n, d, h, w) integer labels to (n, C, d, h, w); out-of-range labels give all zeros."""
    labels = np.asarray(labels)
    out = np.zeros((labels.shape[0], num_classes, *labels.shape[1:]), dtype=dtype)
    for c in range(num_classes):
        out[:, c] = labels == c
    return out


def weighted_cce(p, y, w, atol=1e-6):
    """Loss -sum(w * y * log p) and its gradient w.r.t. the logits behind ``p``.

    ``w`` is per voxel, shape (n, d, h, w). The logit gradient assumes ``p``
    is a softmax over the channel axis.
    """
    if p.shape != y.shape or w.shape != (p.shape[0], *p.shape[2:]):
        raise ShapeMismatchError("probabilities, targets and weights disagree in shape")
    if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=atol, rtol=0):
        raise ValueError("p is not a distribution over the channel axis")
    wv = w[:, None]
    logp = np.log(np.maximum(p, np.finfo(p.dtype).tiny))
    loss = -float(np.sum(wv * y * logp))
    grad = wv * (p * y.sum(axis=1, keepdims=True) - y)
    return loss, grad


def weighted_cce_logits(logits, y, w):
    """Same as ``weighted_cce(softmax(logits), ...)`` but with a stable log-softmax."""
    logp = log_softmax_channels(logits)
    wv = w[:, None]
    loss = -float(np.sum(wv * y * logp))
    grad = wv * (np.exp(logp) * y.sum(axis=1, keepdims=True) - y)
    return loss, grad
