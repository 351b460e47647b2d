"""Log-mel front end: 66 HTK-mel bins over an STFT with hop 640, FFT 1280 at
16 kHz (25 fps), reflect-centered so frame k sits at sample k*640.

Matches the alignment engine's frame grid: a clip of L samples yields
L // 640 + 1 frames, and a frame is complete once sample k*640 + 639 exists
(plus the one-sided reflection at the stream edges).  The streaming buffer
mirrors that policy so live and batch extraction see identical windows.
"""
from __future__ import annotations

import numpy as np

SAMPLE_RATE = 16000
N_FFT = 1280
HOP = 640
N_BINS = N_FFT // 2 + 1
N_MEL = 66
MEL_FLOOR = 1e-6

_HANN = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(N_FFT) / N_FFT)


def frame_count(n_samples: int) -> int:
    return n_samples // HOP + 1


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _mel_weights() -> np.ndarray:
    freqs = np.arange(N_BINS) * (SAMPLE_RATE / N_FFT)
    edges = _mel_to_hz(np.linspace(0.0, _hz_to_mel(SAMPLE_RATE / 2), N_MEL + 2))
    w = np.zeros((N_BINS, N_MEL))
    for j in range(N_MEL):
        lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        w[:, j] = np.maximum(0.0, np.minimum(up, down)) * (2.0 / (hi - lo))
    return w


_MEL_W = _mel_weights()


def reflect_indices(idx: np.ndarray, length: int) -> np.ndarray:
    if length == 1:
        return np.zeros_like(idx)
    period = 2 * length - 2
    m = np.mod(idx, period)
    return np.where(m >= length, period - m, m)


def _frame_logmel(window: np.ndarray) -> np.ndarray:
    spec = np.fft.rfft(window * _HANN)
    power = spec.real**2 + spec.imag**2
    return np.log(np.dot(power, _MEL_W) + MEL_FLOOR)


def log_mel(samples: np.ndarray) -> np.ndarray:
    """Batch log-mel, frames x 66."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        return np.zeros((0, N_MEL))
    pad_idx = reflect_indices(np.arange(-HOP, len(x) + HOP), len(x))
    padded = x[pad_idx]
    n = frame_count(len(x))
    out = np.empty((n, N_MEL))
    for k in range(n):
        out[k] = _frame_logmel(padded[k * HOP : k * HOP + N_FFT])
    return out


class StreamingMel:
    """Incremental log-mel with the same per-frame math as the batch path."""

    def __init__(self):
        self._buf = np.zeros(0)
        self._buf_start = 0
        self._total = 0
        self._next_k = 0

    def _required(self, k: int) -> int:
        return max(k * HOP + N_FFT - HOP, HOP + 1)

    def feed(self, samples: np.ndarray) -> np.ndarray:
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size:
            self._buf = np.concatenate([self._buf, samples])
            self._total += len(samples)
        rows = []
        while self._total >= self._required(self._next_k):
            idx = np.abs(np.arange(self._next_k * HOP - HOP, self._next_k * HOP + HOP))
            rows.append(_frame_logmel(self._buf[idx - self._buf_start]))
            self._next_k += 1
            keep = max(0, self._next_k * HOP - HOP - 1)
            if keep > self._buf_start:
                self._buf = self._buf[keep - self._buf_start :]
                self._buf_start = keep
        return np.array(rows) if rows else np.zeros((0, N_MEL))

    def flush(self) -> np.ndarray:
        if self._total == 0:
            return np.zeros((0, N_MEL))
        rows = []
        for k in range(self._next_k, self._total // HOP + 1):
            idx = reflect_indices(
                np.arange(k * HOP - HOP, k * HOP + HOP), self._total
            )
            rows.append(_frame_logmel(self._buf[idx - self._buf_start]))
        self._next_k = self._total // HOP + 1
        return np.array(rows) if rows else np.zeros((0, N_MEL))
