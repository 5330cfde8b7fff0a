"""Audio synthesis, SNR mixing, feature extraction and normalization."""
import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from .dsp import LOG_EPS, StftConfig, Waveform, _samples, lps_from_ri, stft
from .wavio import read_wav

__all__ = [
    "NOISE_KINDS",
    "MixtureSpec",
    "Mixture",
    "NormStats",
    "TrainingPairs",
    "mix_at_snr",
    "mix_components",
    "generate_noise",
    "synth_utterance",
    "compute_norm_stats",
    "make_training_pairs",
    "stack_context",
    "read_manifest",
    "write_manifest",
    "load_clean",
    "load_noise",
    "power",
]

NOISE_KINDS = ("white", "engine_like", "babble_like", "file")
STD_FLOOR = 1e-6
MANIFEST_FIELDS = ("utterance_id", "clean_path", "noise_kind", "snr_db", "seed", "split")


def power(x):
    x = _samples(x)
    return float(np.mean(x ** 2))


@dataclass(frozen=True)
class MixtureSpec:
    utterance_id: str
    clean_path: str
    noise_kind: str
    snr_db: float
    seed: int
    split: str = "train"

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"{self.utterance_id}: invalid snr_db {self.snr_db}")
        kind = self.noise_kind.split(":", 1)[0]
        if kind not in NOISE_KINDS:
            raise ValueError(f"{self.utterance_id}: unknown noise kind {self.noise_kind!r}")


@dataclass
class Mixture:
    noisy: Waveform
    clean: Waveform
    noise: Waveform
    gain: float
    scale: float


def mix_components(clean, noise, snr_db, seed=0):
    """Mix ``clean`` with a seed-chosen segment of ``noise`` at ``snr_db``.

    The noise segment is scaled by ``gain`` so that the full-utterance power
    ratio equals the request. If the mixture would clip, all three signals are
    scaled down by the same factor, which leaves the SNR untouched.
    """
    c, n = _samples(clean), _samples(noise)
    rate = clean.sample_rate if isinstance(clean, Waveform) else 16000
    if len(n) < len(c):
        raise ValueError(f"noise shorter than clean ({len(n)} < {len(c)})")
    offset = int(np.random.default_rng(seed).integers(0, len(n) - len(c) + 1))
    seg = n[offset:offset + len(c)]
    # power of the segment actually used, so the achieved ratio is exact
    pc, pn = power(c), power(seg)
    if pc <= 0 or pn <= 0:
        raise ValueError("clean and noise segment must have non-zero power")
    gain = math.sqrt(pc / (pn * 10.0 ** (snr_db / 10.0)))
    scaled_noise = gain * seg
    noisy = c + scaled_noise
    peak = np.max(np.abs(noisy))
    scale = 1.0 if peak <= 1.0 else 1.0 / peak
    return Mixture(
        noisy=Waveform(noisy * scale, rate),
        clean=Waveform(c * scale, rate),
        noise=Waveform(scaled_noise * scale, rate),
        gain=gain,
        scale=scale,
    )


def mix_at_snr(clean, noise, snr_db, seed=0):
    return mix_components(clean, noise, snr_db, seed).noisy


def _lowpass(x, cutoff, sr, order=4):
    sos = butter(order, cutoff, btype="low", fs=sr, output="sos")
    return sosfilt(sos, x)


def generate_noise(kind, length, seed=0, sample_rate=16000):
    if length <= 0:
        raise ValueError("length must be positive")
    rng = np.random.default_rng([seed, NOISE_KINDS.index(kind) if kind in NOISE_KINDS else 99])
    t = np.arange(length) / sample_rate
    if kind == "white":
        x = rng.standard_normal(length)
    elif kind == "engine_like":
        f0 = rng.uniform(40.0, 80.0)
        x = np.zeros(length)
        for h in range(1, 7):
            x += np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi)) / h
        rumble = _lowpass(rng.standard_normal(length), 250.0, sample_rate)
        x += 0.5 * rumble / (np.std(rumble) + 1e-12)
    elif kind == "babble_like":
        x = np.zeros(length)
        for _ in range(6):
            lo = rng.uniform(150.0, 600.0)
            hi = rng.uniform(1500.0, 3800.0)
            sos = butter(4, [lo, hi], btype="band", fs=sample_rate, output="sos")
            stream = sosfilt(sos, rng.standard_normal(length))
            rate = rng.uniform(2.0, 6.0)
            env = 0.5 * (1.0 + np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)))
            x += env * stream / (np.std(stream) + 1e-12)
    elif kind == "file":
        raise ValueError("file noise is read from disk; use load_noise('file:<path>')")
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    x = 0.1 * x / np.std(x)
    return Waveform(x, sample_rate)


# rough (F1, F2, F3) in Hz for a handful of vowels
_VOWELS = (
    (730, 1090, 2440),
    (270, 2290, 3010),
    (530, 1840, 2480),
    (570, 840, 2410),
    (300, 870, 2240),
    (660, 1720, 2410),
    (490, 1350, 1690),
)


def _resonator(x, freq, bw, sr):
    r = math.exp(-math.pi * bw / sr)
    theta = 2 * math.pi * freq / sr
    a = [1.0, -2 * r * math.cos(theta), r * r]
    return lfilter([1.0 - r], a, x)


def synth_utterance(seed, duration=1.0, sample_rate=16000):
    """Vowel-like test utterance: glottal pulse trains through three formant
    resonators (summed in parallel), split into syllables with short pauses.
    A background floor about 35 dB below the speech level keeps log spectra
    in a realistic range."""
    rng = np.random.default_rng([seed, 7])
    n = int(round(duration * sample_rate))
    out = np.zeros(n)
    pos = int(rng.integers(400, 1600))
    while pos < n:
        seg_len = int(rng.uniform(0.12, 0.30) * sample_rate)
        stop = min(n, pos + seg_len)
        m = stop - pos
        f0 = rng.uniform(95.0, 230.0) * np.linspace(1.0, rng.uniform(0.85, 1.15), m)
        phase = np.cumsum(2 * np.pi * f0 / sample_rate)
        pulses = np.diff(np.floor(phase / (2 * np.pi)), prepend=0.0)
        # smooth the impulses into a crude glottal flow derivative
        pulses = lfilter([1.0, -1.0], [1.0, -0.97], pulses)
        formants = _VOWELS[int(rng.integers(len(_VOWELS)))]
        seg = np.zeros(m)
        for k, f in enumerate(formants):
            bw = 60.0 + 40.0 * k
            seg += _resonator(pulses, f, bw, sample_rate) * (0.8 ** k)
        env = np.maximum(np.sin(np.pi * np.arange(m) / max(m - 1, 1)), 0.0) ** 0.6
        out[pos:stop] = seg * env * rng.uniform(0.4, 1.0)
        pos = stop + int(rng.uniform(0.03, 0.12) * sample_rate)
    out = 0.5 * out / np.max(np.abs(out))
    floor = math.sqrt(np.mean(out ** 2)) * 10.0 ** (-35.0 / 20.0)
    out += floor * rng.standard_normal(n)
    return Waveform(out, sample_rate)


class NormStats:
    """Per-dimension mean/std for feature normalization."""

    MAGIC = b"NRM1"

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be 1-D vectors of equal length")
        if np.any(self.std < STD_FLOOR):
            raise ValueError("std entries must be >= the floor")

    @property
    def dim(self):
        return len(self.mean)

    def normalize(self, x):
        return (x - self.mean) / self.std

    def denormalize(self, z):
        return z * self.std + self.mean

    def to_bytes(self):
        return self.MAGIC + struct.pack("<I", self.dim) + self.mean.astype("<f8").tobytes() \
            + self.std.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, buf, offset=0):
        """Parse a stats block; returns ``(stats, bytes_consumed)``."""
        if buf[offset:offset + 4] != cls.MAGIC:
            raise ValueError("not a NRM1 block")
        (dim,) = struct.unpack_from("<I", buf, offset + 4)
        start = offset + 8
        mean = np.frombuffer(buf, dtype="<f8", count=dim, offset=start)
        std = np.frombuffer(buf, dtype="<f8", count=dim, offset=start + 8 * dim)
        return cls(mean.copy(), std.copy()), 8 + 16 * dim

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())[0]

    def __eq__(self, other):
        return (isinstance(other, NormStats) and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.std, other.std))


def compute_norm_stats(frames):
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least 2 feature frames")
    return NormStats(x.mean(axis=0), np.maximum(x.std(axis=0), STD_FLOOR))


@dataclass
class TrainingPairs:
    inputs: np.ndarray   # (T, (2c+1) * feature_dim), frames normalized before stacking if stats given
    targets: np.ndarray  # (T, target_dim), raw target units

    def __len__(self):
        return len(self.targets)


def stack_context(frames, context):
    """Stack +-context neighbouring frames (zero rows past the edges)."""
    if context == 0:
        return frames
    t, d = frames.shape
    padded = np.concatenate([np.zeros((context, d)), frames, np.zeros((context, d))])
    return np.concatenate([padded[j:j + t] for j in range(2 * context + 1)], axis=1)


def features(w, cfg, kind):
    ri = stft(w, cfg).stacked()
    if kind == "ri":
        return ri
    if kind == "lps":
        return lps_from_ri(ri, LOG_EPS)
    raise ValueError(f"unknown feature kind {kind!r}")


def make_training_pairs(noisy, clean, cfg=StftConfig(), target_kind="ri", context=0,
                        input_stats=None):
    if len(_samples(noisy)) != len(_samples(clean)):
        raise ValueError("noisy and clean lengths differ")
    x = features(noisy, cfg, target_kind)
    y = features(clean, cfg, target_kind)
    if input_stats is not None:
        x = input_stats.normalize(x)
    return TrainingPairs(stack_context(x, context), y)


def read_manifest(path):
    path = Path(path)
    specs = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: manifest missing columns {sorted(missing)}")
        for row in reader:
            specs.append(MixtureSpec(
                utterance_id=row["utterance_id"],
                clean_path=row["clean_path"],
                noise_kind=row["noise_kind"],
                snr_db=float(row["snr_db"]),
                seed=int(row["seed"]),
                split=row["split"],
            ))
    return specs


def write_manifest(path, specs):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for s in specs:
            w.writerow([s.utterance_id, s.clean_path, s.noise_kind, f"{s.snr_db:.9g}", s.seed, s.split])


def _resolve(path_str, base_dir):
    p = Path(path_str)
    if not p.is_absolute() and base_dir is not None:
        p = Path(base_dir) / p
    return p


def load_clean(clean_path, base_dir=None, duration=1.0):
    """``synth:<seed>`` selects the bundled generator, anything else is a WAV path."""
    if clean_path.startswith("synth:"):
        return synth_utterance(int(clean_path.split(":", 1)[1]), duration)
    p = _resolve(clean_path, base_dir)
    if not p.exists():
        raise FileNotFoundError(f"missing WAV: {p}")
    return read_wav(p)


def load_noise(noise_kind, length, seed, base_dir=None, sample_rate=16000):
    if noise_kind.startswith("file:"):
        p = _resolve(noise_kind.split(":", 1)[1], base_dir)
        if not p.exists():
            raise FileNotFoundError(f"missing WAV: {p}")
        return read_wav(p)
    # noise longer than the utterance so the crop offset varies with the seed
    return generate_noise(noise_kind, length + sample_rate // 2, seed, sample_rate)
