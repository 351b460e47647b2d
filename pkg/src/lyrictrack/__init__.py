"""Real-time lyrics alignment for classical vocal performance.

Offline: align a reference recording to audio synthesized from the symbolic
score and pseudo-label a line/word/note lyrics timeline.  Online: track a
live performance against the reference with windowed online time warping over
chroma and phonetic-posteriorgram features, emitting lyric-position events.
"""

from .timemap import FrameClock, TempoMap, WarpingPath, DEFAULT_CLOCK
from .audio import AudioClip, AudioChunk, chunk_stream, load_wav, save_wav, synth_score_audio
from .features import FeatureMatrix, FeaturePipeline, Log1pParams, apply_pipeline, stack

__version__ = "0.1.0"

__all__ = [
    "FrameClock",
    "TempoMap",
    "WarpingPath",
    "DEFAULT_CLOCK",
    "AudioClip",
    "AudioChunk",
    "chunk_stream",
    "load_wav",
    "save_wav",
    "synth_score_audio",
    "FeatureMatrix",
    "FeaturePipeline",
    "Log1pParams",
    "apply_pipeline",
    "stack",
    "__version__",
]
