"""Experiment configuration stored as an INI file (``key = value`` per section)."""
import configparser
import io
import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dsp import StftConfig
from .model.losses import MMLConfig
from .model.network import ModelConfig

__all__ = ["OptimizerConfig", "TrainConfig", "DataConfig", "ExperimentConfig",
           "load_config", "dump_config", "subseed"]


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    batch_size: int = 32


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")


@dataclass(frozen=True)
class DataConfig:
    manifest: str = ""
    utterance_seconds: float = 2.0


@dataclass(frozen=True)
class ExperimentConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    mml: MMLConfig = field(default_factory=MMLConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    out_dir: str = "runs/default"

    def with_seed(self, seed):
        return replace(self, train=replace(self.train, seed=seed))

    def with_beta(self, beta):
        return replace(self, mml=replace(self.mml, beta=beta))

    def with_out(self, out_dir):
        return replace(self, out_dir=str(out_dir))


_SECTIONS = {
    "stft": StftConfig,
    "model": ModelConfig,
    "mml": MMLConfig,
    "optimizer": OptimizerConfig,
    "train": TrainConfig,
    "data": DataConfig,
}

# bins follow from the STFT size and are not set by hand
_DERIVED = {("model", "bins")}


def _convert(raw, typ, where):
    try:
        if typ in (bool, "bool"):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ValueError(f"{where}: cannot parse {raw!r}") from None


def load_config(path=None, text=None):
    """Read a config file; missing keys keep their defaults, unknown keys fail."""
    cp = configparser.ConfigParser(interpolation=None)
    base = None
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config not found: {path}")
        cp.read(path, encoding="utf-8")
        base = path.parent
    elif text is not None:
        cp.read_string(text)
    unknown = set(cp.sections()) - set(_SECTIONS) - {"output"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    parts = {}
    for name, cls in _SECTIONS.items():
        kw = {}
        types = {f.name: f.type for f in fields(cls)}
        if cp.has_section(name):
            for key, raw in cp.items(name):
                if key not in types or (name, key) in _DERIVED:
                    raise ValueError(f"unknown key [{name}] {key}")
                kw[key] = _convert(raw, types[key], f"[{name}] {key}")
        parts[name] = kw
    stft_cfg = StftConfig(**parts["stft"])
    model_cfg = ModelConfig(bins=stft_cfg.bins, **parts["model"])
    data_kw = parts["data"]
    if data_kw.get("manifest") and base is not None:
        m = Path(data_kw["manifest"])
        if not m.is_absolute():
            data_kw["manifest"] = str(base / m)
    if data_kw.get("manifest") and not Path(data_kw["manifest"]).exists():
        raise FileNotFoundError(f"manifest not found: {data_kw['manifest']}")
    out_dir = cp.get("output", "dir", fallback=ExperimentConfig.out_dir)
    return ExperimentConfig(
        stft=stft_cfg,
        model=model_cfg,
        mml=MMLConfig(**parts["mml"]),
        optimizer=OptimizerConfig(**parts["optimizer"]),
        train=TrainConfig(**parts["train"]),
        data=DataConfig(**data_kw),
        out_dir=out_dir,
    )


def dump_config(cfg):
    cp = configparser.ConfigParser(interpolation=None)
    for name in _SECTIONS:
        obj = getattr(cfg, name)
        cp[name] = {f.name: str(getattr(obj, f.name)) for f in fields(obj)
                    if (name, f.name) not in _DERIVED}
    cp["output"] = {"dir": cfg.out_dir}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def subseed(seed, name):
    """Independent, reproducible sub-seed for one named random stream."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])

