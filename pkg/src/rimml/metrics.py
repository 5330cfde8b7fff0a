"""Segmental SNR and log-spectral distortion."""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dsp import LOG_EPS, StftConfig, _samples, stft

__all__ = ["MetricReport", "ssnr", "lsd", "score"]

SSNR_CLAMP = (-10.0, 35.0)
SILENCE_FLOOR = 1e-8


@dataclass
class MetricReport:
    utterance_id: str
    ssnr_db: float
    lsd_db: float
    frames_scored: int

    def __post_init__(self):
        if self.frames_scored < 1:
            raise ValueError("a report needs at least one scored frame")


def _pair(reference, test):
    ref, tst = _samples(reference), _samples(test)
    if len(ref) != len(tst):
        raise ValueError(f"length mismatch: reference {len(ref)} vs test {len(tst)}")
    return ref, tst


def _ssnr_frames(reference, test, frame_len, hop, clamp):
    lo, hi = clamp
    if not lo < hi:
        raise ValueError("clamp must satisfy lo < hi")
    ref, tst = _pair(reference, test)
    if len(ref) < frame_len:
        raise ValueError(f"insufficient samples: {len(ref)} < frame_len {frame_len}")
    rf = sliding_window_view(ref, frame_len)[::hop]
    tf = sliding_window_view(tst, frame_len)[::hop]
    sig = np.sum(rf ** 2, axis=1)
    err = np.sum((rf - tf) ** 2, axis=1)
    active = sig > SILENCE_FLOOR * np.max(sig)
    if not np.any(active):
        raise ValueError("all frames are silent")
    with np.errstate(divide="ignore"):
        seg = 10.0 * np.log10(sig[active]) - 10.0 * np.log10(err[active])
    return np.clip(seg, lo, hi)


def ssnr(reference, test, frame_len=512, hop=256, clamp=SSNR_CLAMP):
    """Mean clamped per-frame SNR (dB) over frames that are not silent."""
    return float(np.mean(_ssnr_frames(reference, test, frame_len, hop, clamp)))


def _lsd_frames(reference, test, cfg, eps):
    ref, tst = _pair(reference, test)
    pr = stft(ref, cfg)
    pt = stft(tst, cfg)
    lr = 10.0 * np.log10(np.maximum(pr.real ** 2 + pr.imag ** 2, eps))
    lt = 10.0 * np.log10(np.maximum(pt.real ** 2 + pt.imag ** 2, eps))
    return np.sqrt(np.mean((lr - lt) ** 2, axis=1))


def lsd(reference, test, cfg=StftConfig(), eps=LOG_EPS):
    """Log-spectral distortion in dB: per-frame RMS over bins, mean over frames."""
    return float(np.mean(_lsd_frames(reference, test, cfg, eps)))


def score(utterance_id, reference, test, cfg=StftConfig(), clamp=SSNR_CLAMP, eps=LOG_EPS):
    frames = _ssnr_frames(reference, test, cfg.fft_size, cfg.hop, clamp)
    return MetricReport(
        utterance_id=utterance_id,
        ssnr_db=float(np.mean(frames)),
        lsd_db=lsd(reference, test, cfg, eps),
        frames_scored=len(frames),
    )
