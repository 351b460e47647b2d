import numpy as np
import pytest

from lyrictrack.audio import AudioClip


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_tone(freq, duration_s=1.0, amp=0.5, sr=16000):
    t = np.arange(int(duration_s * sr)) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


@pytest.fixture
def tone_a440():
    return make_tone(440.0)
