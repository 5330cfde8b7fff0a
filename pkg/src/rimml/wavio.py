"""16-bit PCM mono WAV read/write and the spectrogram CSV dump."""
import wave

import numpy as np

from .dsp import RISpectrogram, Waveform

__all__ = ["read_wav", "write_wav", "dump_spectrogram_csv", "load_spectrogram_csv"]


def read_wav(path):
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {f.getnchannels()} channels")
        if f.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {8 * f.getsampwidth()}-bit")
        rate = f.getframerate()
        raw = f.readframes(f.getnframes())
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path, w):
    """Write ``w`` as 16-bit PCM. Samples are clipped to [-1, 1)."""
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(int(w.sample_rate))
        f.writeframes(pcm.tobytes())


def dump_spectrogram_csv(path, ri):
    L = ri.bins
    header = ",".join([f"re{k}" for k in range(L)] + [f"im{k}" for k in range(L)])
    np.savetxt(path, ri.stacked(), delimiter=",", fmt="%.12e", header=header, comments="")


def load_spectrogram_csv(path):
    return RISpectrogram.from_stacked(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))
