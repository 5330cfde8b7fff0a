"""Short-time Fourier analysis/synthesis and the fixed synthesis matrices.

Conventions: the forward DFT carries no scale, the inverse carries 1/N.
A frame's half-spectrum has ``L = N/2 + 1`` bins; stacked RI vectors are
laid out ``[real 0..L-1, imag 0..L-1]``.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

__all__ = [
    "Waveform",
    "StftConfig",
    "RISpectrogram",
    "SynthesisMatrices",
    "stft",
    "istft",
    "cola_span",
    "build_synthesis_matrices",
    "frame_via_F",
    "lps_from_ri",
    "magnitude",
    "combine_magnitude_phase",
    "stack_ri",
    "unstack_ri",
]

LOG_EPS = 1e-8


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("waveform must be mono (1-D)")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self):
        return len(self.samples) / self.sample_rate


def _samples(w):
    if isinstance(w, Waveform):
        return w.samples
    x = np.asarray(w, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("waveform must be mono (1-D)")
    if not np.all(np.isfinite(x)):
        raise ValueError("waveform contains non-finite samples")
    return x


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 512
    hop: int = 256
    window: str = "hann"
    sample_rate: int = 16000

    def __post_init__(self):
        if self.fft_size < 2 or self.fft_size % 2:
            raise ValueError("fft_size must be even and >= 2")
        if not 0 < self.hop <= self.fft_size:
            raise ValueError("hop must be in (0, fft_size]")
        w = self.window_array()
        gain = self.cola_gain()
        acc = np.zeros(self.hop)
        for start in range(0, self.fft_size, self.hop):
            seg = w[start:start + self.hop]
            acc[:len(seg)] += seg
        if np.max(np.abs(acc - gain)) > 1e-10 * abs(gain):
            raise ValueError(f"window {self.window!r} is not COLA at hop {self.hop}")

    @property
    def bins(self):
        return self.fft_size // 2 + 1

    def window_array(self):
        if self.window in ("rect", "rectangular", "boxcar"):
            return np.ones(self.fft_size)
        return get_window(self.window, self.fft_size, fftbins=True)

    def cola_gain(self):
        return float(np.sum(self.window_array()) / self.hop)

    def num_frames(self, n_samples):
        if n_samples < self.fft_size:
            return 0
        return 1 + (n_samples - self.fft_size) // self.hop

    def synthesis_length(self, n_frames):
        return (n_frames - 1) * self.hop + self.fft_size


@dataclass
class RISpectrogram:
    """Real and imaginary half-spectra, one row per frame (T x L each)."""

    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        self.real = np.atleast_2d(np.asarray(self.real, dtype=np.float64))
        self.imag = np.atleast_2d(np.asarray(self.imag, dtype=np.float64))
        if self.real.shape != self.imag.shape:
            raise ValueError("real and imag parts differ in shape")
        if not (np.all(np.isfinite(self.real)) and np.all(np.isfinite(self.imag))):
            raise ValueError("spectrogram contains non-finite entries")

    @property
    def frames(self):
        return self.real.shape[0]

    @property
    def bins(self):
        return self.real.shape[1]

    def to_complex(self):
        return self.real + 1j * self.imag

    @classmethod
    def from_complex(cls, z):
        return cls(z.real, z.imag)

    def stacked(self):
        """T x 2L matrix, one stacked RI vector per row."""
        return np.concatenate([self.real, self.imag], axis=1)

    @classmethod
    def from_stacked(cls, y):
        y = np.atleast_2d(y)
        real, imag = unstack_ri(y)
        return cls(real, imag)


def stack_ri(real, imag):
    return np.concatenate([real, imag], axis=-1)


def unstack_ri(y):
    y = np.asarray(y)
    if y.shape[-1] % 2:
        raise ValueError(f"stacked RI length {y.shape[-1]} is odd")
    n = y.shape[-1] // 2
    return y[..., :n], y[..., n:]


def stft(w, cfg=StftConfig()):
    x = _samples(w)
    if len(x) < cfg.fft_size:
        raise ValueError(f"insufficient samples: {len(x)} < fft_size {cfg.fft_size}")
    n_frames = cfg.num_frames(len(x))
    frames = sliding_window_view(x, cfg.fft_size)[::cfg.hop][:n_frames]
    spec = np.fft.rfft(frames * cfg.window_array(), axis=1)
    spec.imag[:, 0] = 0.0
    spec.imag[:, -1] = 0.0
    return RISpectrogram.from_complex(spec)


def istft(ri, cfg=StftConfig()):
    """Overlap-add resynthesis divided by the window's COLA gain.

    Only samples inside :func:`cola_span` are exact; the first and last
    ``fft_size - hop`` samples keep the analysis taper.
    """
    if ri.frames == 0:
        raise ValueError("cannot resynthesize an empty spectrogram")
    if ri.bins != cfg.bins:
        raise ValueError(f"spectrogram has {ri.bins} bins, config expects {cfg.bins}")
    frames = np.fft.irfft(ri.to_complex(), n=cfg.fft_size, axis=1)
    out = np.zeros(cfg.synthesis_length(ri.frames))
    for t in range(ri.frames):
        out[t * cfg.hop:t * cfg.hop + cfg.fft_size] += frames[t]
    return Waveform(out / cfg.cola_gain(), cfg.sample_rate)


def cola_span(n_frames, cfg=StftConfig()):
    """Slice of samples where overlap-add reconstruction is exact."""
    if n_frames < 1:
        raise ValueError("need at least one frame")
    w = cfg.window_array()
    cover = np.zeros(cfg.synthesis_length(n_frames))
    for t in range(n_frames):
        cover[t * cfg.hop:t * cfg.hop + cfg.fft_size] += w
    ok = np.flatnonzero(np.abs(cover - cfg.cola_gain()) <= 1e-10 * cfg.cola_gain())
    if len(ok) == 0:
        return slice(0, 0)
    return slice(int(ok[0]), int(ok[-1]) + 1)


@dataclass(frozen=True, eq=False)
class SynthesisMatrices:
    """Fixed linear maps from a stacked RI vector to its time frame."""

    U1: np.ndarray
    U2: np.ndarray
    C: np.ndarray
    S: np.ndarray
    F: np.ndarray
    P: np.ndarray
    bins: int = field(default=0)

    @property
    def frame_len(self):
        return 2 * self.bins - 2


def _readonly(a):
    a.flags.writeable = False
    return a


@lru_cache(maxsize=8)
def build_synthesis_matrices(L):
    """U1, U2 (symmetry recovery), C, S (IDFT), F = [C U1 | -S U2], P = [I | I]."""
    L = int(L)
    if L < 2:
        raise ValueError("need at least 2 bins")
    n = 2 * L - 2
    k = np.arange(L)
    mirror = np.arange(1, L - 1)

    u1 = np.zeros((n, L))
    u1[k, k] = 1.0
    u1[n - mirror, mirror] = 1.0
    u2 = np.zeros((n, L))
    u2[k, k] = 1.0
    u2[n - mirror, mirror] = -1.0

    # reduce n*m mod n before scaling to keep large-L entries exact
    nm = np.outer(np.arange(n), np.arange(n)) % n
    ang = 2.0 * np.pi * nm / n
    c = np.cos(ang) / n
    s = np.sin(ang) / n
    f = np.hstack([c @ u1, -(s @ u2)])
    p = np.hstack([np.eye(L), np.eye(L)])
    return SynthesisMatrices(*(_readonly(a) for a in (u1, u2, c, s, f, p)), bins=L)


def frame_via_F(y, m):
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != 2 * m.bins:
        raise ValueError(f"stacked RI length {y.shape[-1]} does not match 2L = {2 * m.bins}")
    return y @ m.F.T


def lps_from_ri(y, eps=LOG_EPS):
    if eps <= 0:
        raise ValueError("eps must be positive")
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[-1] // 2
    if y.shape[-1] != 2 * n:
        raise ValueError("stacked RI length must be even")
    # P @ sqr(y), written as a sum of the two halves
    power = y[..., :n] ** 2 + y[..., n:] ** 2
    return np.log(np.maximum(power, eps))


def magnitude(ri):
    return np.hypot(ri.real, ri.imag)


def combine_magnitude_phase(mag, phase):
    mag = np.atleast_2d(np.asarray(mag, dtype=np.float64))
    phase = np.atleast_2d(np.asarray(phase, dtype=np.float64))
    if mag.shape != phase.shape:
        raise ValueError("magnitude and phase differ in shape")
    if np.any(mag < 0):
        raise ValueError("magnitude must be non-negative")
    real = mag * np.cos(phase)
    imag = mag * np.sin(phase)
    # DC and Nyquist are real-valued: fold the sign into the real part
    for edge in (0, -1):
        sign = np.where(np.cos(phase[:, edge]) < 0, -1.0, 1.0)
        real[:, edge] = sign * mag[:, edge]
        imag[:, edge] = 0.0
    return RISpectrogram(real, imag)
