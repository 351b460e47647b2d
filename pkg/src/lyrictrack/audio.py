"""Audio loading, deadpan score synthesis, and chunked streaming.

All audio inside the engine is mono float64 in [-1, 1] at 16 kHz.  Streaming
uses 2560-sample chunks (160 ms), the unit the online tracker consumes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import EmptyAudio, FormatError, PitchOutOfRange
from .timemap import TempoMap

CHUNK_SAMPLES = 2560  # 160 ms at 16 kHz
ATTACK_RELEASE_S = 0.010
HARMONIC_AMPS = (1.0, 0.5, 0.25, 0.125, 0.0625)
SINC_TAPS = 32


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        if self.samples.ndim != 1:
            raise FormatError("clip must be mono")
        if not np.all(np.isfinite(self.samples)):
            raise FormatError("clip contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class AudioChunk:
    samples: np.ndarray
    start_sample: int


def load_wav(path) -> AudioClip:
    """Load a PCM WAV file as a mono 16 kHz clip.

    Accepts 16-bit integer or 32-bit float encodings with 1 or 2 channels at
    any rate.  Stereo is averaged to mono; non-16 kHz input is resampled with
    a 32-tap windowed-sinc interpolator.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[0:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack("<I", blob[pos + 4 : pos + 8])
        body = blob[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    audio_format, n_channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if n_channels not in (1, 2):
        raise FormatError(f"{path}: {n_channels} channels unsupported")
    if audio_format == 1 and bits == 16:
        raw = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        raw = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise FormatError(
            f"{path}: unsupported encoding (format {audio_format}, {bits} bits)"
        )
    if raw.size == 0:
        raise EmptyAudio(f"{path}: no samples")
    if n_channels == 2:
        raw = raw.reshape(-1, 2).mean(axis=1)
    if rate != 16000:
        raw = _resample_sinc(raw, rate, 16000)
        if raw.size == 0:
            raise EmptyAudio(f"{path}: empty after resampling")
    peak = np.max(np.abs(raw)) if raw.size else 0.0
    if peak > 1.0:
        raw = raw / peak
    return AudioClip(raw, 16000)


def save_wav(path, clip: AudioClip) -> None:
    """Write a clip as 16-bit PCM WAV."""
    pcm = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    hdr = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    hdr += b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, 1, clip.sample_rate, clip.sample_rate * 2, 2, 16
    )
    hdr += b"data" + struct.pack("<I", len(data))
    with open(path, "wb") as fh:
        fh.write(hdr + data)


def _resample_sinc(x: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Windowed-sinc resampling, 32 taps, Hann window, processed in blocks."""
    ratio = rate_out / rate_in
    n_out = int(np.floor(len(x) * ratio))
    if n_out == 0:
        return np.zeros(0)
    half = SINC_TAPS // 2
    cutoff = min(1.0, ratio)  # anti-alias when downsampling
    out = np.empty(n_out)
    block = 65536
    for start in range(0, n_out, block):
        idx = np.arange(start, min(start + block, n_out))
        center = idx / ratio
        base = np.floor(center).astype(np.int64)
        offs = np.arange(-half + 1, half + 1)
        taps = base[:, None] + offs[None, :]
        frac = center[:, None] - taps
        kern = cutoff * np.sinc(cutoff * frac)
        kern *= 0.5 + 0.5 * np.cos(np.pi * frac / half)  # Hann taper
        taps = np.clip(taps, 0, len(x) - 1)
        out[idx] = np.sum(x[taps] * kern, axis=1)
    return out


def _midi_to_hz(pitch: float) -> float:
    return 440.0 * 2.0 ** ((pitch - 69) / 12.0)


def synth_score_audio(
    notes: Sequence,
    tm: TempoMap,
    accompaniment: Sequence = (),
    sample_rate: int = 16000,
    tail_s: float = 0.25,
) -> AudioClip:
    """Render note events as deadpan additive tones.

    Each note (anything with ``onset``, ``duration`` in beats and a MIDI
    ``pitch``) becomes a fundamental plus four harmonics at amplitudes
    1, 1/2, 1/4, 1/8, 1/16 with a 10 ms linear attack and release kept
    inside the note span.  Overlaps sum; the result is peak-normalized
    to 0.9.
    """
    events = list(notes) + list(accompaniment)
    if not events:
        raise EmptyAudio("no notes to synthesize")
    for ev in events:
        if not (21 <= ev.pitch <= 108):
            raise PitchOutOfRange(f"MIDI pitch {ev.pitch} outside 21..108")
    spans = [
        (tm.time_at_beat(ev.onset), tm.time_at_beat(ev.onset + ev.duration), ev.pitch)
        for ev in events
    ]
    total = max(t1 for _, t1, _ in spans) + tail_s
    out = np.zeros(int(np.ceil(total * sample_rate)))
    nyquist = sample_rate / 2.0
    for t0, t1, pitch in spans:
        i0, i1 = int(round(t0 * sample_rate)), int(round(t1 * sample_rate))
        n = i1 - i0
        if n <= 0:
            continue
        t = np.arange(n) / sample_rate
        f0 = _midi_to_hz(pitch)
        tone = np.zeros(n)
        for h, amp in enumerate(HARMONIC_AMPS, start=1):
            if h * f0 >= nyquist:
                break
            tone += amp * np.sin(2 * np.pi * h * f0 * t)
        ramp = min(int(ATTACK_RELEASE_S * sample_rate), n // 2)
        env = np.ones(n)
        if ramp > 0:
            env[:ramp] = np.linspace(0.0, 1.0, ramp, endpoint=False)
            env[-ramp:] = np.linspace(1.0, 0.0, ramp)
        out[i0:i1] += tone * env
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.9 / peak
    return AudioClip(out, sample_rate)


def chunk_stream(clip: AudioClip) -> Iterator[AudioChunk]:
    """Split a clip into consecutive gapless 2560-sample chunks.

    The final chunk may be shorter; it is emitted, not dropped, so that
    streamed and whole-file feature sequences cover the same frames.
    """
    for start in range(0, len(clip.samples), CHUNK_SAMPLES):
        block = clip.samples[start : start + CHUNK_SAMPLES]
        yield AudioChunk(block, start)
