"""Hot loops of the frequency-axis convolution.

Every kernel exists twice: a numba version (``*_numba``) that does the
padding, gathers and scatters in compiled loops around BLAS products, and a
numpy version (``*_numpy``) built on strided windows and ``tensordot``.
``conv1d_forward`` / ``conv1d_backward`` dispatch to numba unless it is
missing or disabled through ``RIMML_DISABLE_NUMBA``.

Layout: ``x`` is (batch, in_channels, L), ``w`` is (out, in, K) with K odd,
zero "same" padding of K // 2 on each side, stride 1. The operation is a
cross-correlation: ``out[b, o, l] = sum_{c, k} w[o, c, k] * x[b, c, l + k - K//2]``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import HAS_NUMBA, njit

__all__ = [
    "conv1d_forward",
    "conv1d_backward",
    "conv1d_forward_numpy",
    "conv1d_backward_numpy",
    "conv1d_forward_numba",
    "conv1d_backward_numba",
    "BACKEND",
]


def _windows(x, k):
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    return sliding_window_view(xp, k, axis=2)  # (B, C, L, K)


def conv1d_forward_numpy(x, w):
    cols = _windows(x, w.shape[2])
    out = np.tensordot(cols, w, axes=([1, 3], [1, 2]))  # (B, L, O)
    return np.ascontiguousarray(out.transpose(0, 2, 1))


def conv1d_backward_numpy(dout, x, w):
    k = w.shape[2]
    pad = k // 2
    cols = _windows(x, k)
    dw = np.tensordot(dout, cols, axes=([0, 2], [0, 2]))  # (O, C, K)
    dcols = np.tensordot(dout, w, axes=([1], [0]))  # (B, L, C, K)
    n_len = x.shape[2]
    dxp = np.zeros((x.shape[0], x.shape[1], n_len + 2 * pad), dtype=np.result_type(dout, w))
    for j in range(k):
        dxp[:, :, j:j + n_len] += dcols[:, :, :, j].transpose(0, 2, 1)
    return dxp[:, :, pad:pad + n_len], dw


@njit(cache=True)
def _im2col_nb(x, k):
    # (B, C, L) -> (B * L, C * K) zero-padded windows
    n_b, n_c, n_len = x.shape
    pad = k // 2
    cols = np.zeros((n_b * n_len, n_c * k), dtype=x.dtype)
    for b in range(n_b):
        for l in range(n_len):
            row = b * n_len + l
            j0 = max(0, pad - l)
            j1 = min(k, n_len - l + pad)
            for c in range(n_c):
                for j in range(j0, j1):
                    cols[row, c * k + j] = x[b, c, l + j - pad]
    return cols


@njit(cache=True)
def _col2im_nb(dcols, n_b, n_c, n_len, k):
    pad = k // 2
    dx = np.zeros((n_b, n_c, n_len), dtype=dcols.dtype)
    for b in range(n_b):
        for l in range(n_len):
            row = b * n_len + l
            j0 = max(0, pad - l)
            j1 = min(k, n_len - l + pad)
            for c in range(n_c):
                for j in range(j0, j1):
                    dx[b, c, l + j - pad] += dcols[row, c * k + j]
    return dx


@njit(cache=True)
def _conv1d_forward_nb(x, w):
    # all batch rows laid end to end with their padding, so tap j is one
    # contiguous column shift and the whole conv is K matrix products
    n_b, n_c, n_len = x.shape
    n_o, _, k = w.shape
    pad = k // 2
    span = n_len + 2 * pad
    flat = np.zeros((n_c, n_b * span), dtype=x.dtype)
    for c in range(n_c):
        for b in range(n_b):
            for l in range(n_len):
                flat[c, b * span + pad + l] = x[b, c, l]
    m = n_b * span - 2 * pad
    acc = np.zeros((n_o, m), dtype=x.dtype)
    for j in range(k):
        acc += np.dot(np.ascontiguousarray(w[:, :, j]), np.ascontiguousarray(flat[:, j:j + m]))
    out = np.empty((n_b, n_o, n_len), dtype=x.dtype)
    for b in range(n_b):
        for o in range(n_o):
            for l in range(n_len):
                out[b, o, l] = acc[o, b * span + l]
    return out


@njit(cache=True)
def _conv1d_backward_nb(dout, x, w):
    n_b, n_c, n_len = x.shape
    n_o, _, k = w.shape
    cols = _im2col_nb(x, k)
    d2 = np.empty((n_b * n_len, n_o), dtype=x.dtype)
    for b in range(n_b):
        for o in range(n_o):
            for l in range(n_len):
                d2[b * n_len + l, o] = dout[b, o, l]
    dw = np.dot(np.ascontiguousarray(d2.T), cols).reshape(n_o, n_c, k)
    dcols = np.dot(d2, np.ascontiguousarray(w.reshape(n_o, n_c * k)))
    return _col2im_nb(dcols, n_b, n_c, n_len, k), dw


def _as(a, dt):
    return np.ascontiguousarray(a, dtype=dt)


@njit(cache=True)
def _conv1d_forward_cols_nb(x, w):
    n_b, n_c, n_len = x.shape
    n_o, _, k = w.shape
    out = np.dot(_im2col_nb(x, k), np.ascontiguousarray(w.reshape(n_o, n_c * k).T))
    res = np.empty((n_b, n_o, n_len), dtype=x.dtype)
    for b in range(n_b):
        for l in range(n_len):
            for o in range(n_o):
                res[b, o, l] = out[b * n_len + l, o]
    return res


# below this many input channels the per-tap products are too thin for BLAS
_THIN_INPUT = 8


def conv1d_forward_numba(x, w):
    dt = np.result_type(x, w)
    x, w = _as(x, dt), _as(w, dt)
    if x.shape[1] < _THIN_INPUT:
        return _conv1d_forward_cols_nb(x, w)
    return _conv1d_forward_nb(x, w)


def conv1d_backward_numba(dout, x, w):
    dt = np.result_type(dout, x, w)
    return _conv1d_backward_nb(_as(dout, dt), _as(x, dt), _as(w, dt))


if HAS_NUMBA:
    BACKEND = "numba"
    conv1d_forward = conv1d_forward_numba
    conv1d_backward = conv1d_backward_numba
else:
    BACKEND = "numpy"
    conv1d_forward = conv1d_forward_numpy
    conv1d_backward = conv1d_backward_numpy
