"""Noisy-phase study: phase maps, phase-agreement masks, and the SSNR of
clean magnitude resynthesized with noisy phase."""
from dataclasses import dataclass

import numpy as np

from .dataset import mix_components
from .dsp import StftConfig, _samples, cola_span, combine_magnitude_phase, istft, magnitude, stft
from .metrics import ssnr

__all__ = [
    "PhaseDiffMask",
    "phase_of",
    "wrap_phase",
    "phase_diff_mask",
    "noisy_phase_resynthesis",
    "noisy_phase_ssnr_table",
    "write_pgm",
]


def phase_of(ri):
    """Four-quadrant phase in (-pi, pi]; zero-magnitude bins get phase 0."""
    ph = np.arctan2(ri.imag, ri.real)
    ph[ph == -np.pi] = np.pi
    ph[(ri.real == 0) & (ri.imag == 0)] = 0.0
    return ph


def wrap_phase(d):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(d, dtype=np.float64), 2 * np.pi)


@dataclass
class PhaseDiffMask:
    threshold: float
    mask: np.ndarray

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")

    @property
    def fraction(self):
        return float(np.mean(self.mask))


def phase_diff_mask(clean, noisy, threshold=0.1):
    clean = np.asarray(clean)
    noisy = np.asarray(noisy)
    if clean.shape != noisy.shape:
        raise ValueError(f"shape mismatch: {clean.shape} vs {noisy.shape}")
    return PhaseDiffMask(threshold, np.abs(wrap_phase(clean - noisy)) < threshold)


def noisy_phase_resynthesis(clean, noisy, cfg=StftConfig()):
    """Clean magnitude + noisy phase -> waveform, plus the phase-agreement inputs."""
    cs = stft(clean, cfg)
    ns = stft(noisy, cfg)
    ri = combine_magnitude_phase(magnitude(cs), phase_of(ns))
    return istft(ri, cfg), phase_of(cs), phase_of(ns)


def noisy_phase_ssnr_table(clean, noise, snr_levels, cfg=StftConfig(), seed=0, threshold=0.1):
    """Rows of ``(snr_db, ssnr_db, mask_fraction)``, one per requested level.

    SSNR is scored against the (peak-scaled) clean signal over the samples
    where overlap-add is exact, so an infinite SNR reaches the clamp ceiling.
    """
    levels = list(snr_levels)
    if not levels:
        raise ValueError("snr_levels must be non-empty")
    rows = []
    for snr_db in levels:
        mix = mix_components(clean, noise, snr_db, seed)
        resyn, cp, npz = noisy_phase_resynthesis(mix.clean, mix.noisy, cfg)
        span = cola_span(cp.shape[0], cfg)
        ref = _samples(mix.clean)[span]
        rows.append((float(snr_db), ssnr(ref, resyn.samples[span], cfg.fft_size, cfg.hop),
                     phase_diff_mask(cp, npz, threshold).fraction))
    return rows


def write_pgm(path, mask):
    """Plain (P2) PGM, frequency bins as rows with the highest bin on top."""
    img = np.asarray(mask, dtype=int).T[::-1]
    h, w = img.shape
    lines = ["P2", f"{w} {h}", "1"]
    lines += [" ".join(map(str, row)) for row in img]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
