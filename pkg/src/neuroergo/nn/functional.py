"""Forward/backward pairs for the layers used by the models.

Every ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache. Arrays keep the dtype they are
given, so the same code runs in float32 for training and float64 for
gradient checks.
"""
import numpy as np

from .. import kernels
from ..errors import ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
LEAKY_SLOPE = 0.2


def conv2d_forward(x, weight, bias, stride=2, pad=1):
    """2-D cross-correlation with zero padding; ``x`` is NCHW, ``weight`` is
    ``(c_out, c_in, k, k)``."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and weight")
    b, c, h, w = x.shape
    c_out, c_in, k, k2 = weight.shape
    if c != c_in or k != k2 or bias.shape != (c_out,):
        raise ShapeError(f"conv2d shape mismatch: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ShapeError(f"input {h}x{w} too small for kernel {k}")
    xh = x.transpose(0, 2, 3, 1)
    xpad = np.pad(xh, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = kernels.im2col_nhwc(xpad, k, stride, oh, ow)
    wmat = weight.transpose(2, 3, 1, 0).reshape(k * k * c, c_out)
    out = (cols @ wmat + bias).reshape(b, oh, ow, c_out).transpose(0, 3, 1, 2)
    return out, (xpad.shape, cols, wmat, weight.shape, stride, pad, oh, ow)


def conv2d_backward(dout, cache, need_dx=True):
    pad_shape, cols, wmat, wshape, stride, pad, oh, ow = cache
    c_out, c_in, k, _ = wshape
    b = dout.shape[0]
    d2 = np.ascontiguousarray(dout.transpose(0, 2, 3, 1)).reshape(b * oh * ow, c_out)
    dw = (cols.T @ d2).reshape(k, k, c_in, c_out).transpose(3, 2, 0, 1)
    db = d2.sum(axis=0)
    dx = None
    if need_dx:
        dcols = np.ascontiguousarray(d2 @ wmat.T)
        dxpad = kernels.col2im_nhwc(dcols, tuple(pad_shape), k, stride, oh, ow)
        hp, wp = pad_shape[1], pad_shape[2]
        dx = dxpad[:, pad:hp - pad, pad:wp - pad, :].transpose(0, 3, 1, 2)
    return dx, np.ascontiguousarray(dw), db


def _channels_last(x):
    """``(N*H*W, C)`` view of an NCHW array; free when memory is NHWC,
    which is what :func:`conv2d_forward` produces."""
    b, c, h, w = x.shape
    return x.transpose(0, 2, 3, 1).reshape(b * h * w, c)


def _from_channels_last(x2, shape):
    b, c, h, w = shape
    return x2.reshape(b, h, w, c).transpose(0, 3, 1, 2)


def batchnorm2d_forward(x, gamma, beta, running_mean, running_var, train=True,
                        momentum=BN_MOMENTUM, eps=BN_EPS):
    """Batch norm over (N, H, W) per channel.

    In train mode the running statistics are updated in place with the
    biased batch variance, so a fixed batch drives eval mode to exactly the
    train-mode output.
    """
    x2 = _channels_last(x)
    if train:
        mean = x2.mean(axis=0)
        var = ((x2 - mean) ** 2).mean(axis=0)
        running_mean *= 1 - momentum
        running_mean += momentum * mean
        running_var *= 1 - momentum
        running_var += momentum * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x2 - mean) * inv_std
    out = gamma * xhat + beta
    return _from_channels_last(out, x.shape), (xhat, inv_std, gamma, train, x.shape)


def batchnorm2d_backward(dout, cache):
    xhat, inv_std, gamma, train, shape = cache
    d2 = _channels_last(dout)
    dgamma = (d2 * xhat).sum(axis=0)
    dbeta = d2.sum(axis=0)
    dxhat = d2 * gamma
    if not train:
        return _from_channels_last(dxhat * inv_std, shape), dgamma, dbeta
    m = d2.shape[0]
    dx = (inv_std / m) * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return _from_channels_last(dx, shape), dgamma, dbeta


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def elu_forward(x, alpha=1.0):
    neg = x <= 0
    ex = alpha * np.expm1(np.minimum(x, 0))
    out = np.where(neg, ex, x)
    return out, (neg, ex, alpha)


def elu_backward(dout, cache):
    neg, ex, alpha = cache
    return dout * np.where(neg, ex + alpha, 1.0)


def dense_forward(x, weight, bias):
    """``x @ weight + bias`` with ``weight`` shaped ``(in, out)``."""
    if x.ndim != 2 or x.shape[1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense shape mismatch: input {x.shape}, weight {weight.shape}")
    return x @ weight + bias, x


def dense_backward(dout, x, weight, need_dx=True):
    dw = x.T @ dout
    db = dout.sum(axis=0)
    dx = dout @ weight.T if need_dx else None
    return dx, dw, db


def dropout_mask(shape, p, rng, dtype=np.float32):
    """Inverted-dropout mask: zeros with probability ``p``, else ``1/(1-p)``."""
    if p <= 0:
        return np.ones(shape, dtype=dtype)
    keep = rng.random(shape) >= p
    return keep.astype(dtype) * np.asarray(1.0 / (1.0 - p), dtype=dtype)


def dropout_forward(x, p, train, rng=None, mask=None):
    if not train or p == 0:
        return x, None
    if mask is None:
        mask = dropout_mask(x.shape, p, rng, x.dtype.type)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


def leaky_relu(x, slope=LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``.

    ``labels`` are 0-based class indices.
    """
    labels = np.asarray(labels)
    b = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    logp = z - logsum[:, None]
    loss = float(-logp[np.arange(b), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(b), labels] -= 1
    return loss, (grad / b).astype(logits.dtype, copy=False)


def global_max_pool_forward(x, graph_ptr):
    """Per-graph feature-wise max over contiguous node blocks.

    ``graph_ptr`` holds the start node of every graph plus the total count.
    """
    n_graphs = len(graph_ptr) - 1
    out = np.empty((n_graphs, x.shape[1]), dtype=x.dtype)
    arg = np.empty((n_graphs, x.shape[1]), dtype=np.int64)
    for g in range(n_graphs):
        a, b = graph_ptr[g], graph_ptr[g + 1]
        local = np.argmax(x[a:b], axis=0)
        arg[g] = a + local
        out[g] = x[arg[g], np.arange(x.shape[1])]
    return out, (arg, x.shape)


def global_max_pool_backward(dout, cache):
    arg, shape = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    cols = np.broadcast_to(np.arange(shape[1]), arg.shape)
    np.add.at(dx, (arg, cols), dout)
    return dx
