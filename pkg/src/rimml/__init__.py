"""Complex (real/imaginary) spectrogram enhancement with multi-metric losses."""
from .dsp import (
    RISpectrogram,
    StftConfig,
    SynthesisMatrices,
    Waveform,
    build_synthesis_matrices,
    combine_magnitude_phase,
    frame_via_F,
    istft,
    lps_from_ri,
    stft,
)
from .metrics import lsd, ssnr

__version__ = "0.1.0"
