"""Reconstruction losses on stacked RI vectors and their gradients.

All losses sum over every leading (frame/batch) axis and return
``(loss, grad)`` with the gradient taken w.r.t. the prediction ``yhat``.
The LPS and waveform terms are fixed-weight layers stacked on top of the
network output: a square + [I | I] sum + log for the power spectrum, the
matrix F for the time frame.
"""
from dataclasses import dataclass

import numpy as np

from ..dsp import LOG_EPS

__all__ = [
    "MMLConfig",
    "MMLTerms",
    "ri_loss",
    "waveform_loss",
    "lps_loss",
    "mml_terms",
    "mml_loss",
]


@dataclass(frozen=True)
class MMLConfig:
    alpha: float = 1.0
    beta: float = 0.0
    eps: float = LOG_EPS

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if self.alpha == 0 and self.beta == 0:
            raise ValueError("alpha and beta cannot both be zero")
        if not self.eps > 0:
            raise ValueError("eps must be positive")


def _check(yhat, y):
    yhat = np.asarray(yhat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if yhat.shape != y.shape:
        raise ValueError(f"shape mismatch: {yhat.shape} vs {y.shape}")
    return yhat, y


def ri_loss(yhat, y):
    """Squared Euclidean distance between stacked RI vectors."""
    yhat, y = _check(yhat, y)
    d = yhat - y
    return float(np.sum(d * d)), 2.0 * d


def waveform_loss(yhat, y, m):
    """Squared error between the time frames ``F yhat`` and ``F y``."""
    yhat, y = _check(yhat, y)
    if y.shape[-1] != m.F.shape[1]:
        raise ValueError(f"stacked RI length {y.shape[-1]} does not match F with {m.F.shape[1]} columns")
    e = (yhat - y) @ m.F.T
    return float(np.sum(e * e)), 2.0 * (e @ m.F)


def lps_loss(yhat, y, eps=LOG_EPS):
    yhat, y = _check(yhat, y)
    n = y.shape[-1] // 2
    p_hat = yhat[..., :n] ** 2 + yhat[..., n:] ** 2
    p = y[..., :n] ** 2 + y[..., n:] ** 2
    live = p_hat > eps
    d = np.log(np.maximum(p_hat, eps)) - np.log(np.maximum(p, eps))
    # d/dp of log(max(p, eps)) is 1/p above the floor and 0 on it
    dp = np.where(live, 2.0 * d / np.where(live, p_hat, 1.0), 0.0)
    grad = np.concatenate([2.0 * yhat[..., :n] * dp, 2.0 * yhat[..., n:] * dp], axis=-1)
    return float(np.sum(d * d)), grad


@dataclass
class MMLTerms:
    ri: float
    lps: float
    total: float
    grad: np.ndarray


def mml_terms(yhat, y, cfg):
    ri, g_ri = ri_loss(yhat, y)
    lp, g_lp = lps_loss(yhat, y, cfg.eps)
    return MMLTerms(ri, lp, cfg.alpha * ri + cfg.beta * lp, cfg.alpha * g_ri + cfg.beta * g_lp)


def mml_loss(yhat, y, cfg):
    """alpha * RI reconstruction + beta * log-power-spectrum reconstruction."""
    t = mml_terms(yhat, y, cfg)
    return t.total, t.grad
