from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    batchnorm_backward,
    batchnorm_forward,
    conv1d_freq_backward,
    conv1d_freq_forward,
    dense_backward,
    dense_forward,
    prelu_backward,
    prelu_forward,
)
from .losses import MMLConfig, MMLTerms, lps_loss, mml_loss, mml_terms, ri_loss, waveform_loss
from .network import ARCHS, Model, ModelConfig, NumericalDivergence
from .optim import AdamState, adam_step
