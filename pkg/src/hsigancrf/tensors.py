"""Dense-tensor numerics for the spectral-spatial networks.

Forward and backward passes for the four cuboid layer types (band-axis and
plane convolutions plus their transposed forms), dense layers, batch
normalization, activations, a numerically safe softmax, and the Adam update.

Axis convention is fixed throughout: activations are ``(batch, height,
width, bands, channels)``; a single sample may be passed as a 4-D
``(height, width, bands, channels)`` array and comes back without the batch
axis. Spatial stages expect a depth-merged input (bands folded into
channels, band axis length 1). Training runs in float32; the finite
difference harness drives exactly the same code in float64.
"""

from dataclasses import dataclass, field

import numpy as np

from hsigancrf import _kernels
from hsigancrf.errors import ContractError, NumericError, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.9
LRELU_SLOPE = 0.2
LOG_CLAMP = 1e-12


def ensure_finite(arr, what="array"):
    if not np.isfinite(arr).all():
        raise NumericError(f"{what} contains NaN or Inf")
    return arr


@dataclass
class LayerParams:
    """Parameters of one layer: kernel, bias, optional batch-norm state.

    Kernel layouts by kind:
      spectral / tspectral : (k_bands, c_in, c_out)
      spatial  / tspatial  : (k_h, k_w, c_in, c_out)
      dense                : (in_dim, out_dim)
    ``stride`` and ``padding`` are (spatial, spectral) pairs.
    """

    kind: str
    kernel: np.ndarray
    bias: np.ndarray
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)
    bn_gamma: np.ndarray = None
    bn_beta: np.ndarray = None
    bn_running_mean: np.ndarray = None
    bn_running_var: np.ndarray = None

    def has_bn(self):
        return self.bn_gamma is not None

    def param_arrays(self):
        """Trainable arrays in a fixed serialization order."""
        out = [("kernel", self.kernel), ("bias", self.bias)]
        if self.has_bn():
            out += [("bn_gamma", self.bn_gamma), ("bn_beta", self.bn_beta)]
        return out

    def state_arrays(self):
        """All arrays including non-trainable running statistics."""
        out = list(self.param_arrays())
        if self.has_bn():
            out += [
                ("bn_running_mean", self.bn_running_mean),
                ("bn_running_var", self.bn_running_var),
            ]
        return out


def _as_batch(x):
    x = np.asarray(x)
    if x.ndim == 4:
        return x[None], True
    if x.ndim == 5:
        return x, False
    raise ShapeError(f"expected 4-D or 5-D activation tensor, got ndim={x.ndim}")


def _unbatch(y, squeezed):
    return y[0] if squeezed else y


def _out_extent(n, k, stride, pad):
    return (n + 2 * pad - k) // stride + 1


# ---------------------------------------------------------------------------
# band-axis (spectral) convolution
# ---------------------------------------------------------------------------


def conv_spectral(x, p: LayerParams):
    """Cross-correlation along the band axis, mixing channels.

    Output bands = floor((bands + 2*pad - k_b)/stride) + 1; spatial dims are
    untouched.
    """
    x, squeezed = _as_batch(x)
    if p.kind != "spectral":
        raise ContractError(f"layer kind {p.kind!r} passed to conv_spectral")
    kb, ci, _ = p.kernel.shape
    n, h, w, b, c = x.shape
    if c != ci:
        raise ShapeError(f"channel axis mismatch: input has {c}, kernel expects {ci}")
    stride, pad = p.stride[1], p.padding[1]
    if b + 2 * pad < kb:
        raise ShapeError(f"band axis too short: {b} bands (+2*{pad} pad) for kernel extent {kb}")
    flat = x.reshape(n * h * w, b, c)
    out = _kernels.band_conv(flat, p.kernel, stride, pad)
    out = out.reshape(n, h, w, out.shape[1], -1) + p.bias
    return _unbatch(out, squeezed)


def conv_spectral_backward(x, p: LayerParams, grad, want_param_grads=True):
    """Reverse-mode for conv_spectral: returns (dx, {dkernel, dbias} | None)."""
    x, squeezed = _as_batch(x)
    grad, _ = _as_batch(grad)
    n, h, w, b, c = x.shape
    kb = p.kernel.shape[0]
    stride, pad = p.stride[1], p.padding[1]
    gflat = grad.reshape(n * h * w, grad.shape[3], grad.shape[4])
    kern_t = np.ascontiguousarray(p.kernel.transpose(0, 2, 1))
    dx = _kernels.band_scatter(gflat, kern_t, stride, pad, b).reshape(x.shape)
    pgrads = None
    if want_param_grads:
        xflat = x.reshape(n * h * w, b, c)
        pgrads = {
            "kernel": _kernels.band_kernel_grad(xflat, gflat, kb, stride, pad),
            "bias": grad.sum(axis=(0, 1, 2, 3)),
        }
    return _unbatch(dx, squeezed), pgrads


def tconv_spectral(z, p: LayerParams):
    """Transpose of conv_spectral: output bands = (bands-1)*stride + k_b - 2*pad."""
    z, squeezed = _as_batch(z)
    if p.kind != "tspectral":
        raise ContractError(f"layer kind {p.kind!r} passed to tconv_spectral")
    kb, ci, _ = p.kernel.shape
    n, h, w, b, c = z.shape
    if c != ci:
        raise ShapeError(f"channel axis mismatch: input has {c}, kernel expects {ci}")
    stride, pad = p.stride[1], p.padding[1]
    out_b = (b - 1) * stride + kb - 2 * pad
    if out_b <= 0:
        raise ShapeError(f"computed band extent {out_b} is not positive")
    flat = z.reshape(n * h * w, b, c)
    out = _kernels.band_scatter(flat, p.kernel, stride, pad, out_b)
    out = out.reshape(n, h, w, out_b, -1) + p.bias
    return _unbatch(out, squeezed)


def tconv_spectral_backward(z, p: LayerParams, grad, want_param_grads=True):
    z, squeezed = _as_batch(z)
    grad, _ = _as_batch(grad)
    n, h, w, b, c = z.shape
    kb = p.kernel.shape[0]
    stride, pad = p.stride[1], p.padding[1]
    gflat = grad.reshape(n * h * w, grad.shape[3], grad.shape[4])
    kern_t = np.ascontiguousarray(p.kernel.transpose(0, 2, 1))
    dz = _kernels.band_conv(gflat, kern_t, stride, pad).reshape(z.shape)
    pgrads = None
    if want_param_grads:
        zflat = z.reshape(n * h * w, b, c)
        dk = _kernels.band_kernel_grad(gflat, zflat, kb, stride, pad)
        pgrads = {
            "kernel": np.ascontiguousarray(dk.transpose(0, 2, 1)),
            "bias": grad.sum(axis=(0, 1, 2, 3)),
        }
    return _unbatch(dz, squeezed), pgrads


# ---------------------------------------------------------------------------
# plane (spatial) convolution over depth-merged tensors
# ---------------------------------------------------------------------------


def _require_merged(x, op):
    if x.shape[3] != 1:
        raise ContractError(
            f"{op} requires a depth-merged input (band axis length 1), got {x.shape[3]} bands"
        )


def conv_spatial(x, p: LayerParams):
    """2-D spatial cross-correlation at full channel depth."""
    x, squeezed = _as_batch(x)
    if p.kind != "spatial":
        raise ContractError(f"layer kind {p.kind!r} passed to conv_spatial")
    _require_merged(x, "conv_spatial")
    kh, kw, ci, _ = p.kernel.shape
    n, h, w, _, c = x.shape
    if c != ci:
        raise ShapeError(f"channel axis mismatch: input has {c}, kernel expects {ci}")
    stride, pad = p.stride[0], p.padding[0]
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise ShapeError(
            f"spatial axes too small: {h}x{w} (+2*{pad} pad) for kernel {kh}x{kw}"
        )
    out = _kernels.plane_conv(x.reshape(n, h, w, c), p.kernel, stride, pad)
    out = out[:, :, :, None, :] + p.bias
    return _unbatch(out, squeezed)


def conv_spatial_backward(x, p: LayerParams, grad, want_param_grads=True):
    x, squeezed = _as_batch(x)
    grad, _ = _as_batch(grad)
    n, h, w, _, c = x.shape
    kh, kw = p.kernel.shape[:2]
    stride, pad = p.stride[0], p.padding[0]
    g = grad.reshape(n, grad.shape[1], grad.shape[2], grad.shape[4])
    kern_t = np.ascontiguousarray(p.kernel.transpose(0, 1, 3, 2))
    dx = _kernels.plane_scatter(g, kern_t, stride, pad, h, w).reshape(x.shape)
    pgrads = None
    if want_param_grads:
        pgrads = {
            "kernel": _kernels.plane_kernel_grad(
                x.reshape(n, h, w, c), g, kh, kw, stride, pad
            ),
            "bias": g.sum(axis=(0, 1, 2)),
        }
    return _unbatch(dx, squeezed), pgrads


def tconv_spatial(z, p: LayerParams):
    """Transpose of conv_spatial: spatial size grows to (in-1)*stride + k - 2*pad."""
    z, squeezed = _as_batch(z)
    if p.kind != "tspatial":
        raise ContractError(f"layer kind {p.kind!r} passed to tconv_spatial")
    _require_merged(z, "tconv_spatial")
    kh, kw, ci, _ = p.kernel.shape
    n, h, w, _, c = z.shape
    if c != ci:
        raise ShapeError(f"channel axis mismatch: input has {c}, kernel expects {ci}")
    stride, pad = p.stride[0], p.padding[0]
    out_h = (h - 1) * stride + kh - 2 * pad
    out_w = (w - 1) * stride + kw - 2 * pad
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(f"computed spatial extent {out_h}x{out_w} is not positive")
    out = _kernels.plane_scatter(z.reshape(n, h, w, c), p.kernel, stride, pad, out_h, out_w)
    out = out[:, :, :, None, :] + p.bias
    return _unbatch(out, squeezed)


def tconv_spatial_backward(z, p: LayerParams, grad, want_param_grads=True):
    z, squeezed = _as_batch(z)
    grad, _ = _as_batch(grad)
    n, h, w, _, c = z.shape
    kh, kw = p.kernel.shape[:2]
    stride, pad = p.stride[0], p.padding[0]
    g = grad.reshape(n, grad.shape[1], grad.shape[2], grad.shape[4])
    kern_t = np.ascontiguousarray(p.kernel.transpose(0, 1, 3, 2))
    dz = _kernels.plane_conv(g, kern_t, stride, pad).reshape(z.shape)
    pgrads = None
    if want_param_grads:
        dk = _kernels.plane_kernel_grad(g, z.reshape(n, h, w, c), kh, kw, stride, pad)
        pgrads = {
            "kernel": np.ascontiguousarray(dk.transpose(0, 1, 3, 2)),
            "bias": g.sum(axis=(0, 1, 2)),
        }
    return _unbatch(dz, squeezed), pgrads


# ---------------------------------------------------------------------------
# elementwise activations
# ---------------------------------------------------------------------------

_ACTIVATIONS = ("lrelu", "relu", "tanh")


def activate(kind, x):
    """Elementwise nonlinearity; lrelu uses slope 0.2 on the negative side."""
    if kind == "lrelu":
        return np.where(x > 0, x, LRELU_SLOPE * x)
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "tanh":
        return np.tanh(x)
    raise ContractError(f"unknown activation {kind!r}; expected one of {_ACTIVATIONS}")


def activate_backward(kind, x, grad):
    if kind == "lrelu":
        return np.where(x > 0, grad, LRELU_SLOPE * grad)
    if kind == "relu":
        return np.where(x > 0, grad, 0)
    if kind == "tanh":
        t = np.tanh(x)
        return grad * (1 - t * t)
    raise ContractError(f"unknown activation {kind!r}; expected one of {_ACTIVATIONS}")


# ---------------------------------------------------------------------------
# batch normalization (per channel, i.e. per last-axis slot)
# ---------------------------------------------------------------------------


def batchnorm(x, p: LayerParams, mode, update_running=False):
    """Normalize per channel; train mode uses batch statistics, infer mode the
    running averages. Returns (out, cache); cache feeds batchnorm_backward.
    """
    if mode not in ("train", "infer"):
        raise ContractError(f"batchnorm mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(x)
    axes = tuple(range(x.ndim - 1))
    if mode == "train":
        n_eff = int(np.prod([x.shape[a] for a in axes]))
        if x.shape[0] < 2:
            raise ContractError("batchnorm train mode requires a batch of at least 2")
        mean = x.mean(axis=axes, dtype=np.float64)
        var = x.var(axis=axes, dtype=np.float64)
        if update_running:
            p.bn_running_mean *= BN_MOMENTUM
            p.bn_running_mean += (1 - BN_MOMENTUM) * mean.astype(p.bn_running_mean.dtype)
            p.bn_running_var *= BN_MOMENTUM
            p.bn_running_var += (1 - BN_MOMENTUM) * var.astype(p.bn_running_var.dtype)
    else:
        n_eff = 0
        mean = p.bn_running_mean.astype(np.float64)
        var = p.bn_running_var.astype(np.float64)
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = ((x - mean) * inv_std).astype(x.dtype)
    out = p.bn_gamma * xhat + p.bn_beta
    cache = (xhat, inv_std.astype(x.dtype), mode, n_eff)
    return out, cache


def batchnorm_backward(x, p: LayerParams, grad, cache, want_param_grads=True):
    if cache is None:
        raise ContractError("batchnorm_backward called without a forward cache")
    xhat, inv_std, mode, n_eff = cache
    axes = tuple(range(grad.ndim - 1))
    dxhat = grad * p.bn_gamma
    if mode == "train":
        s1 = dxhat.sum(axis=axes)
        s2 = (dxhat * xhat).sum(axis=axes)
        dx = (inv_std / n_eff) * (n_eff * dxhat - s1 - xhat * s2)
    else:
        dx = dxhat * inv_std
    pgrads = None
    if want_param_grads:
        pgrads = {
            "bn_gamma": (grad * xhat).sum(axis=axes),
            "bn_beta": grad.sum(axis=axes),
        }
    return dx.astype(grad.dtype), pgrads


# ---------------------------------------------------------------------------
# dense layer and softmax head
# ---------------------------------------------------------------------------


def dense(x, p: LayerParams):
    """Affine layer on flattened features: x @ W + b."""
    if p.kind != "dense":
        raise ContractError(f"layer kind {p.kind!r} passed to dense")
    if x.shape[-1] != p.kernel.shape[0]:
        raise ShapeError(
            f"dense input width {x.shape[-1]} does not match weights {p.kernel.shape[0]}"
        )
    return x @ p.kernel + p.bias


def dense_backward(x, p: LayerParams, grad, want_param_grads=True):
    dx = grad @ p.kernel.T
    pgrads = None
    if want_param_grads:
        pgrads = {"kernel": x.T @ grad, "bias": grad.sum(axis=0)}
    return dx, pgrads


def softmax(logits):
    """Max-shifted softmax computed in float64; rows sum to 1 within 1e-9."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs, grad_probs):
    """Pull dL/dprobs back to dL/dlogits through the softmax Jacobian."""
    inner = (grad_probs * probs).sum(axis=-1, keepdims=True)
    return probs * (grad_probs - inner)


def dense_softmax(x, weights, bias):
    """Affine layer followed by the stabilized softmax."""
    if x.shape[-1] != weights.shape[0]:
        raise ShapeError(
            f"dense input width {x.shape[-1]} does not match weights {weights.shape[0]}"
        )
    return softmax(x @ weights + bias)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Bias-corrected Adam with one moment pair per named parameter."""

    lr: float = 0.0007
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params, grads, state: AdamState):
    """One Adam update, in place on the arrays in ``params``.

    ``params`` and ``grads`` are aligned {name: array} dicts. Any non-finite
    gradient aborts before a single parameter is touched.
    """
    if set(params) != set(grads):
        raise ContractError("params and grads are not aligned")
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NumericError(f"gradient for {name!r} contains NaN or Inf; update aborted")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, param in params.items():
        g = grads[name]
        m = state.first_moment.setdefault(name, np.zeros_like(param))
        v = state.second_moment.setdefault(name, np.zeros_like(param))
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        if state.lr != 0.0:
            param -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state
