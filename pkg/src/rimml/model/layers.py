"""Forward/backward pairs for the layers the enhancement networks use.

Each ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
takes ``(dout, cache)``. Channel axis is 1 for both (B, C) and (B, C, L)
inputs.
"""
import numpy as np

from .. import kernels

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


def conv1d_freq_forward(x, w, b=None):
    """Same-padded cross-correlation along the frequency axis.

    x: (B, C_in, L); w: (C_out, C_in, K) with K odd; b: (C_out,) or None.
    """
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv shape mismatch: input {x.shape}, filters {w.shape}")
    if w.shape[2] % 2 == 0:
        raise ValueError("filter length must be odd")
    out = kernels.conv1d_forward(x, w)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ValueError(f"bias shape {b.shape} does not match {w.shape[0]} filters")
        out += b[None, :, None]
    return out, (x, w, b is not None)


def conv1d_freq_backward(dout, cache):
    x, w, has_bias = cache
    dx, dw = kernels.conv1d_backward(dout, x, w)
    db = dout.sum(axis=(0, 2)) if has_bias else None
    return dx, dw, db


def dense_forward(x, w, b=None):
    out = x @ w
    if b is not None:
        out += b
    return out, (x, w, b is not None)


def dense_backward(dout, cache):
    x, w, has_bias = cache
    return dout @ w.T, x.T @ dout, (dout.sum(axis=0) if has_bias else None)


def _chan(v, ndim):
    return v.reshape((1, -1) + (1,) * (ndim - 2))


def prelu_forward(x, slope):
    a = _chan(slope, x.ndim)
    return np.where(x > 0, x, a * x), (x, slope)


def prelu_backward(dout, cache):
    x, slope = cache
    a = _chan(slope, x.ndim)
    axes = tuple(i for i in range(x.ndim) if i != 1)
    dx = np.where(x > 0, dout, a * dout)
    da = np.sum(np.where(x > 0, 0.0, x * dout), axis=axes)
    return dx, da.astype(slope.dtype)


def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode="train",
                      momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel batch norm. In train mode the running statistics are
    updated in place: ``r = momentum * r + (1 - momentum) * batch``."""
    axes = tuple(i for i in range(x.ndim) if i != 1)
    if mode == "train":
        if x.shape[0] < 2:
            raise ValueError("batch norm in train mode needs a batch of at least 2")
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mu
        running_var *= momentum
        running_var += (1 - momentum) * var
    elif mode == "infer":
        mu, var = running_mean, running_var
    else:
        raise ValueError(f"unknown batch norm mode {mode!r}")
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - _chan(mu, x.ndim)) * _chan(inv, x.ndim)
    out = xhat * _chan(gamma, x.ndim) + _chan(beta, x.ndim)
    return out.astype(x.dtype, copy=False), (xhat, gamma, inv, axes, mode)


def batchnorm_backward(dout, cache):
    xhat, gamma, inv, axes, mode = cache
    dgamma = np.sum(dout * xhat, axis=axes)
    dbeta = np.sum(dout, axis=axes)
    g = _chan(gamma * inv, dout.ndim)
    if mode == "infer":
        return dout * g, dgamma, dbeta
    m = dout.size // dout.shape[1]
    dx = g / m * (m * dout - _chan(dbeta, dout.ndim) - xhat * _chan(dgamma, dout.ndim))
    return dx, dgamma, dbeta
