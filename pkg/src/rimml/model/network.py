"""CNN / DNN enhancement networks assembled from the layers module."""
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..dataset import stack_context
from . import layers as F

__all__ = ["ARCHS", "ModelConfig", "Model", "NumericalDivergence"]

ARCHS = ("ri_cnn", "ri_dnn", "lps_dnn_baseline")
PRELU_INIT = 0.25


class NumericalDivergence(FloatingPointError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    arch: str = "ri_cnn"
    bins: int = 257
    context: int = 0
    conv_layers: int = 4
    filters_per_layer: int = 50
    filter_len: int = 25
    dense_layers: int = 2
    dense_width: int = 512
    dnn_hidden_layers: int = 6
    dnn_width: int = 1000
    use_batch_norm: bool = True

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}; expected one of {ARCHS}")
        counts = ("bins", "conv_layers", "filters_per_layer", "filter_len", "dense_layers",
                  "dense_width", "dnn_hidden_layers", "dnn_width")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.context < 0:
            raise ValueError("context must be >= 0")
        if self.filter_len % 2 == 0:
            raise ValueError("filter_len must be odd")

    @property
    def target_kind(self):
        return "lps" if self.arch == "lps_dnn_baseline" else "ri"

    @property
    def feature_dim(self):
        return 2 * self.bins if self.target_kind == "ri" else self.bins

    @property
    def input_channels(self):
        base = 2 if self.target_kind == "ri" else 1
        return base * (2 * self.context + 1)

    @property
    def input_dim(self):
        return self.input_channels * self.bins

    @property
    def output_dim(self):
        return self.feature_dim

    def to_text(self):
        return "\n".join(f"{k}={v}" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text):
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            k, v = line.split("=", 1)
            t = types[k]
            if t in (bool, "bool"):
                kw[k] = v == "True"
            elif t in (int, "int"):
                kw[k] = int(v)
            else:
                kw[k] = v
        return cls(**kw)


def _he(rng, shape, fan_in, dtype):
    std = np.sqrt(2.0 / ((1.0 + PRELU_INIT ** 2) * fan_in))
    return (rng.standard_normal(shape) * std).astype(dtype)


class Layer:
    """A layer with named parameters, gradients and (optionally) buffers."""

    kind = "layer"

    def __init__(self, name):
        self.name = name
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self.cache = None


class Conv(Layer):
    kind = "conv"

    def __init__(self, name, c_in, c_out, k, bias, rng, dtype):
        super().__init__(name)
        self.params["w"] = _he(rng, (c_out, c_in, k), c_in * k, dtype)
        if bias:
            self.params["b"] = np.zeros(c_out, dtype=dtype)

    def forward(self, x, mode):
        out, self.cache = F.conv1d_freq_forward(x, self.params["w"], self.params.get("b"))
        return out

    def backward(self, dout):
        dx, dw, db = F.conv1d_freq_backward(dout, self.cache)
        self.grads["w"] = dw
        if db is not None:
            self.grads["b"] = db
        return dx


class Dense(Layer):
    kind = "dense"

    def __init__(self, name, n_in, n_out, bias, rng, dtype, zero=False):
        super().__init__(name)
        if zero:
            self.params["w"] = np.zeros((n_in, n_out), dtype=dtype)
        else:
            self.params["w"] = _he(rng, (n_in, n_out), n_in, dtype)
        if bias:
            self.params["b"] = np.zeros(n_out, dtype=dtype)

    def forward(self, x, mode):
        out, self.cache = F.dense_forward(x, self.params["w"], self.params.get("b"))
        return out

    def backward(self, dout):
        dx, dw, db = F.dense_backward(dout, self.cache)
        self.grads["w"] = dw
        if db is not None:
            self.grads["b"] = db
        return dx


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, name, channels, dtype):
        super().__init__(name)
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["running_var"] = np.ones(channels, dtype=dtype)

    def forward(self, x, mode):
        out, self.cache = F.batchnorm_forward(
            x, self.params["gamma"], self.params["beta"],
            self.buffers["running_mean"], self.buffers["running_var"], mode)
        return out

    def backward(self, dout):
        dx, self.grads["gamma"], self.grads["beta"] = F.batchnorm_backward(dout, self.cache)
        return dx


class PReLU(Layer):
    kind = "prelu"

    def __init__(self, name, channels, dtype):
        super().__init__(name)
        self.params["slope"] = np.full(channels, PRELU_INIT, dtype=dtype)

    def forward(self, x, mode):
        out, self.cache = F.prelu_forward(x, self.params["slope"])
        return out

    def backward(self, dout):
        dx, self.grads["slope"] = F.prelu_backward(dout, self.cache)
        return dx


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, mode):
        self.cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self.cache)


class Model:
    """Enhancement network plus the normalization of its inputs and targets.

    ``forward`` takes normalized input features and returns predictions in
    target units (denormalized), which is where the losses are evaluated.
    """

    def __init__(self, cfg, seed=0, dtype=np.float64, input_stats=None, target_stats=None,
                 zero_output=False):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.input_stats = input_stats
        self.target_stats = target_stats
        self.layers = self._build(np.random.default_rng(seed), zero_output)

    def _build(self, rng, zero_output):
        cfg, dt = self.cfg, self.dtype
        bn = cfg.use_batch_norm
        out = []

        def block(i, width, kind):
            # a bias in front of batch norm is redundant with its shift
            if bn:
                out.append(BatchNorm(f"{kind}{i}.bn", width, dt))
            out.append(PReLU(f"{kind}{i}.prelu", width, dt))

        if cfg.arch == "ri_cnn":
            c = cfg.input_channels
            for i in range(cfg.conv_layers):
                out.append(Conv(f"conv{i}", c, cfg.filters_per_layer, cfg.filter_len, not bn, rng, dt))
                block(i, cfg.filters_per_layer, "conv")
                c = cfg.filters_per_layer
            out.append(Flatten("flatten"))
            n_in = c * cfg.bins
            n_hidden, width = cfg.dense_layers, cfg.dense_width
        else:
            out.append(Flatten("flatten"))
            n_in = cfg.input_dim
            n_hidden, width = cfg.dnn_hidden_layers, cfg.dnn_width
        for i in range(n_hidden):
            out.append(Dense(f"dense{i}", n_in, width, not bn, rng, dt))
            block(i, width, "dense")
            n_in = width
        out.append(Dense("out", n_in, cfg.output_dim, True, rng, dt, zero=zero_output))
        return out

    def _shape_input(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 1:
            x = x[None]
        if x.shape[-1] != self.cfg.input_dim:
            raise ValueError(f"input dimension {x.shape[-1]} does not match model input {self.cfg.input_dim}")
        if self.cfg.arch == "ri_cnn":
            return x.reshape(x.shape[0], self.cfg.input_channels, self.cfg.bins)
        return x

    def _target_scale(self):
        if self.target_stats is None:
            return None, None
        return (self.target_stats.std.astype(self.dtype), self.target_stats.mean.astype(self.dtype))

    def forward(self, x, train=False):
        """Predictions (batch, output_dim) in target units."""
        mode = "train" if train else "infer"
        h = self._shape_input(x)
        for layer in self.layers:
            h = layer.forward(h, mode)
            if not np.all(np.isfinite(h)):
                raise NumericalDivergence(f"numerical divergence in layer {layer.name}")
        std, mean = self._target_scale()
        if std is not None:
            h = h * std + mean
        return h

    def backward(self, dyhat):
        """Backpropagate the loss gradient w.r.t. the denormalized output."""
        g = np.asarray(dyhat, dtype=self.dtype)
        std, _ = self._target_scale()
        if std is not None:
            g = g * std
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def named_parameters(self):
        return [(f"{l.name}.{k}", v) for l in self.layers for k, v in l.params.items()]

    def named_buffers(self):
        return [(f"{l.name}.{k}", v) for l in self.layers for k, v in l.buffers.items()]

    def parameters(self):
        return [v for _, v in self.named_parameters()]

    def gradients(self):
        return [l.grads[k] for l in self.layers for k in l.params]

    def state_tensors(self):
        """Parameters then buffers of each layer, in declaration order."""
        out = []
        for l in self.layers:
            out.extend((f"{l.name}.{k}", v) for k, v in l.params.items())
            out.extend((f"{l.name}.{k}", v) for k, v in l.buffers.items())
        return out

    def enhance_features(self, features):
        """Raw noisy feature frames (T, feature_dim) -> predicted targets (T, output_dim)."""
        x = features
        if self.input_stats is not None:
            x = self.input_stats.normalize(x)
        x = stack_context(x, self.cfg.context)
        return np.asarray(self.forward(x, train=False), dtype=np.float64)
