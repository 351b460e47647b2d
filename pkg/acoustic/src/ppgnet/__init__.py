"""Framewise phoneme classifier producing phonetic posteriorgrams.

Causal CRNN over 66-bin log-mel input (hop 640, FFT 1280, 16 kHz): a
convolutional front end with left-only time padding, a uni-directional LSTM,
and a softmax head over a configurable phoneme set.  Ships training on
wav + .phn data, FMX1 posteriorgram export, and a PPGSTREAM server, plus a
synthetic labeled-audio generator for CI.
"""

from .model import ModelConfig, PhonemeCrnn, load_checkpoint, save_checkpoint
from .infer import StreamingInference, export_ppg
from .labels import SETS, LabelSet

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "PhonemeCrnn",
    "load_checkpoint",
    "save_checkpoint",
    "StreamingInference",
    "export_ppg",
    "SETS",
    "LabelSet",
    "__version__",
]
