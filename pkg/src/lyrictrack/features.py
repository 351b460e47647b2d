"""Framewise features: STFT, chroma, log-mel, MFCC, scaling, and distances.

Frames are 1280 samples (Hann) on a 640-sample hop at 16 kHz, i.e. 25 fps,
center-padded by reflection so frame k sits at sample k*640.  Batch and
streamed extraction route every frame through the same per-frame transforms,
which keeps the two paths bit-identical; do not replace the per-frame loops
with whole-matrix products without re-verifying that equality.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft

from .audio import AudioClip
from .errors import (
    BadDimension,
    ConfigError,
    DimensionMismatch,
    EmptyAudio,
    EngineError,
    FormatError,
    LengthMismatch,
    NegativeInput,
)
from .timemap import DEFAULT_CLOCK, FrameClock

N_FFT = 1280
HOP = 640
N_BINS = N_FFT // 2 + 1
N_MEL = 66
MEL_FLOOR = 1e-6
CHROMA_FMIN = 65.4  # C2
CHROMA_FMAX = 2093.0  # C7

_HANN = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(N_FFT) / N_FFT)

KIND_DIMS = {
    "chroma": (12,),
    "mel": (N_MEL,),
    "mfcc": (13, 5),
    "dlnco": (12,),
    "ppg": None,  # any
    "stacked": None,
}

KIND_TAGS = {"chroma": 1, "mel": 2, "mfcc": 3, "ppg": 4, "stacked": 5, "dlnco": 6}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}

FMX_MAGIC = b"FMX1"


@dataclass(frozen=True)
class FeatureMatrix:
    """frames x dims feature sequence at the 25 fps engine clock."""

    data: np.ndarray
    kind: str
    clock: FrameClock = DEFAULT_CLOCK
    metric: Optional[str] = None

    def __post_init__(self):
        if self.data.ndim != 2:
            raise BadDimension(f"feature data must be 2-D, got {self.data.ndim}-D")
        if not np.all(np.isfinite(self.data)):
            raise FormatError("feature data contains non-finite values")
        if self.kind not in KIND_DIMS:
            raise ConfigError(f"unknown feature kind {self.kind!r}")
        allowed = KIND_DIMS[self.kind]
        if allowed is not None and self.data.shape[1] not in allowed:
            raise BadDimension(
                f"{self.kind} features must have dims in {allowed},"
                f" got {self.data.shape[1]}"
            )
        self.data.setflags(write=False)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> int:
        return self.data.shape[1]


# -- STFT ---------------------------------------------------------------------


def reflect_indices(idx: np.ndarray, length: int) -> np.ndarray:
    """Fold arbitrary integer indices into [0, length) by edge-free reflection."""
    if length == 1:
        return np.zeros_like(idx)
    period = 2 * length - 2
    m = np.mod(idx, period)
    return np.where(m >= length, period - m, m)


def frame_count(n_samples: int) -> int:
    return n_samples // HOP + 1


def _frame_fft(window_samples: np.ndarray) -> np.ndarray:
    # single fixed-shape transform; shared by batch and streaming paths
    return np.fft.rfft(window_samples * _HANN)


def stft(clip: AudioClip) -> np.ndarray:
    """Complex spectrogram, frames x 641, frame k centered at sample k*640."""
    x = clip.samples
    if len(x) == 0:
        raise EmptyAudio("cannot compute STFT of empty audio")
    n = frame_count(len(x))
    pad_idx = reflect_indices(np.arange(-HOP, len(x) + HOP), len(x))
    padded = x[pad_idx]
    out = np.empty((n, N_BINS), dtype=np.complex128)
    for k in range(n):
        out[k] = _frame_fft(padded[k * HOP : k * HOP + N_FFT])
    return out


class StreamingStft:
    """Incremental STFT over arbitrarily chunked sample input.

    ``feed`` returns every frame whose real samples have fully arrived;
    ``flush`` returns the remaining right-reflected frames at end of stream.
    The rolling buffer is pruned so memory stays bounded.
    """

    def __init__(self):
        self._buf = np.zeros(0)
        self._buf_start = 0
        self._total = 0
        self._next_k = 0
        self._flushed = False

    def _required(self, k: int) -> int:
        # frame 0 also needs sample 640 for its left reflection
        return max(k * HOP + N_FFT - HOP, HOP + 1)

    def feed(self, samples: np.ndarray) -> np.ndarray:
        if self._flushed:
            raise EngineError("stream already flushed")
        samples = np.asarray(samples, dtype=np.float64)
        if samples.size:
            self._buf = np.concatenate([self._buf, samples])
            self._total += len(samples)
        frames = []
        while self._total >= self._required(self._next_k):
            frames.append(self._window(self._next_k))
            self._next_k += 1
            self._prune()
        return self._fft_rows(frames)

    def flush(self) -> np.ndarray:
        if self._flushed:
            return np.zeros((0, N_BINS), dtype=np.complex128)
        self._flushed = True
        if self._total == 0:
            return np.zeros((0, N_BINS), dtype=np.complex128)
        frames = []
        last = self._total // HOP
        for k in range(self._next_k, last + 1):
            idx = np.arange(k * HOP - HOP, k * HOP + HOP)
            folded = reflect_indices(idx, self._total)
            frames.append(self._buf[folded - self._buf_start])
        return self._fft_rows(frames)

    def _window(self, k: int) -> np.ndarray:
        idx = np.arange(k * HOP - HOP, k * HOP + HOP)
        idx = np.abs(idx)  # left reflection at stream start; no right edge yet
        return self._buf[idx - self._buf_start]

    def _prune(self):
        # the final flushed frame reflects back to sample (length - n_fft/2 - 1),
        # which can sit one sample before the next frame's left edge
        keep_from = max(0, self._next_k * HOP - HOP - 1)
        if keep_from > self._buf_start:
            self._buf = self._buf[keep_from - self._buf_start :]
            self._buf_start = keep_from

    def _fft_rows(self, frames) -> np.ndarray:
        out = np.empty((len(frames), N_BINS), dtype=np.complex128)
        for i, f in enumerate(frames):
            out[i] = _frame_fft(f)
        return out

    @property
    def buffered_samples(self) -> int:
        return len(self._buf)


# -- filterbanks ----------------------------------------------------------------


def _bin_freqs() -> np.ndarray:
    return np.arange(N_BINS) * (16000.0 / N_FFT)


def _chroma_weights() -> np.ndarray:
    """641 x 12 matrix accumulating power into pitch classes, A440 tuning."""
    freqs = _bin_freqs()
    w = np.zeros((N_BINS, 12))
    for i, f in enumerate(freqs):
        if CHROMA_FMIN <= f <= CHROMA_FMAX:
            midi = int(np.round(12.0 * np.log2(f / 440.0) + 69.0))
            w[i, midi % 12] = 1.0
    return w


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def _mel_weights() -> np.ndarray:
    """641 x 66 triangular HTK-mel filterbank over 0..8000 Hz, unit area."""
    freqs = _bin_freqs()
    edges = _mel_to_hz(np.linspace(_hz_to_mel(0.0), _hz_to_mel(8000.0), N_MEL + 2))
    w = np.zeros((N_BINS, N_MEL))
    for j in range(N_MEL):
        lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        tri = np.maximum(0.0, np.minimum(up, down))
        w[:, j] = tri * (2.0 / (hi - lo))
    return w


_CHROMA_W = _chroma_weights()
_MEL_W = _mel_weights()


def _power_row(spec_row: np.ndarray) -> np.ndarray:
    return spec_row.real**2 + spec_row.imag**2


def chroma(spec: np.ndarray, clock: FrameClock = DEFAULT_CLOCK) -> FeatureMatrix:
    """Raw chromagram: power in C2..C7 bins folded into 12 pitch classes."""
    out = np.empty((spec.shape[0], 12))
    for k in range(spec.shape[0]):
        out[k] = np.dot(_power_row(spec[k]), _CHROMA_W)
    return FeatureMatrix(out, "chroma", clock)


def log_mel(spec: np.ndarray, clock: FrameClock = DEFAULT_CLOCK) -> FeatureMatrix:
    """66-bin log mel spectrogram: ln(mel power + 1e-6)."""
    out = np.empty((spec.shape[0], N_MEL))
    for k in range(spec.shape[0]):
        out[k] = np.log(np.dot(_power_row(spec[k]), _MEL_W) + MEL_FLOOR)
    return FeatureMatrix(out, "mel", clock)


def chroma_rows(spec_rows: np.ndarray) -> np.ndarray:
    out = np.empty((spec_rows.shape[0], 12))
    for k in range(spec_rows.shape[0]):
        out[k] = np.dot(_power_row(spec_rows[k]), _CHROMA_W)
    return out


def mel_rows(spec_rows: np.ndarray) -> np.ndarray:
    out = np.empty((spec_rows.shape[0], N_MEL))
    for k in range(spec_rows.shape[0]):
        out[k] = np.log(np.dot(_power_row(spec_rows[k]), _MEL_W) + MEL_FLOOR)
    return out


# Log-mel sits below zero (silence is ln(1e-6)); the alignment feature shifts
# it up by the silence floor so digital silence becomes the zero vector and
# the compressive log1p scaling stays within its non-negative domain.
MEL_LOG_OFFSET = -np.log(MEL_FLOOR)


def mel_alignment_rows(spec_rows: np.ndarray) -> np.ndarray:
    return mel_rows(spec_rows) + MEL_LOG_OFFSET


def mel_alignment(spec: np.ndarray, clock: FrameClock = DEFAULT_CLOCK) -> FeatureMatrix:
    """Floor-shifted log-mel used as the online 'mel' alignment feature."""
    return FeatureMatrix(mel_alignment_rows(spec), "mel", clock)


def mfcc(mel: FeatureMatrix, n: int = 13) -> FeatureMatrix:
    """First n coefficients of an orthonormal DCT-II over the mel axis."""
    if mel.dims != N_MEL:
        raise BadDimension(f"mfcc needs 66-dim log-mel input, got {mel.dims}")
    if n not in (13, 5):
        raise ConfigError(f"mfcc keeps 13 or 5 coefficients, got {n}")
    return FeatureMatrix(mfcc_rows(mel.data, n), "mfcc", mel.clock)


def mfcc_rows(mel_data: np.ndarray, n: int) -> np.ndarray:
    out = np.empty((mel_data.shape[0], n))
    for k in range(mel_data.shape[0]):
        out[k] = scipy.fft.dct(mel_data[k], type=2, norm="ortho")[:n]
    return out


# -- frame transforms -----------------------------------------------------------


@dataclass(frozen=True)
class Log1pParams:
    a: float = 5.0
    b: float = 4.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ConfigError("log1p parameters must be positive")


def normalize_frame(v: np.ndarray, mode: str) -> np.ndarray:
    """Per-frame L2 or L-inf normalization; zero frames pass through."""
    v = np.asarray(v, dtype=np.float64)
    rows = v if v.ndim == 2 else v[None, :]
    if mode == "l2":
        norms = np.sqrt((rows * rows).sum(axis=1))
    elif mode == "linf":
        norms = np.abs(rows).max(axis=1) if rows.shape[1] else np.zeros(len(rows))
    elif mode == "none":
        return v.copy()
    else:
        raise ConfigError(f"unknown norm {mode!r}")
    safe = np.where(norms == 0.0, 1.0, norms)
    out = rows / safe[:, None]
    return out if v.ndim == 2 else out[0]


def log1p_scale(v: np.ndarray, p: Log1pParams = Log1pParams()) -> np.ndarray:
    """Compressive scaling log(a*x + 1)/b; maps [0, 1] below 0.5 at defaults."""
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise NegativeInput("log1p scaling requires non-negative input")
    return np.log(p.a * v + 1.0) / p.b


def softmax_frame(v: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax; rows sum to one."""
    v = np.asarray(v, dtype=np.float64)
    rows = v if v.ndim == 2 else v[None, :]
    shifted = rows - rows.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    return out if v.ndim == 2 else out[0]


def distance(x: np.ndarray, y: np.ndarray, metric: str) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"{x.shape} vs {y.shape}")
    return float(metric_rows(x, y[None, :], metric)[0])


def metric_rows(x: np.ndarray, block: np.ndarray, metric: str) -> np.ndarray:
    """Distances from one frame to every row of a block.

    Reductions run per row so results do not depend on block height; DTW,
    OLTW, and scalar calls all share this routine.
    """
    if x.shape[0] != block.shape[1]:
        raise DimensionMismatch(f"dims {x.shape[0]} vs {block.shape[1]}")
    if metric == "euclidean":
        diff = block - x
        return np.sqrt((diff * diff).sum(axis=1))
    if metric == "cosine":
        dots = (block * x).sum(axis=1)
        nx = np.sqrt((x * x).sum())
        nb = np.sqrt((block * block).sum(axis=1))
        denom = nx * nb
        out = np.where(denom > 0.0, 1.0 - dots / np.where(denom == 0, 1.0, denom), 0.0)
        return np.maximum(out, 0.0)
    raise ConfigError(f"unknown metric {metric!r}")


# -- pipelines ------------------------------------------------------------------


@dataclass(frozen=True)
class FeaturePipeline:
    """Deterministic per-frame transform: norm, then scaling steps in order."""

    kind: str
    norm: str = "none"
    scale: tuple[str, ...] = ()
    distance: str = "euclidean"
    log1p: Log1pParams = field(default_factory=Log1pParams)

    def __post_init__(self):
        if self.norm not in ("l2", "linf", "none"):
            raise ConfigError(f"unknown norm {self.norm!r}")
        for s in self.scale:
            if s not in ("softmax", "log1p", "none"):
                raise ConfigError(f"unknown scaling {s!r}")
        if self.distance not in ("euclidean", "cosine"):
            raise ConfigError(f"unknown distance {self.distance!r}")

    def apply_rows(self, rows: np.ndarray) -> np.ndarray:
        out = normalize_frame(rows, self.norm)
        for s in self.scale:
            if s == "softmax":
                out = softmax_frame(out)
            elif s == "log1p":
                out = log1p_scale(out, self.log1p)
        return out


def default_pipeline(kind: str) -> FeaturePipeline:
    """Per-feature defaults found by the grid search over norm/scale/distance."""
    if kind in ("chroma", "dlnco"):
        return FeaturePipeline(kind, norm="linf", scale=("log1p",), distance="euclidean")
    if kind == "mel":
        return FeaturePipeline(kind, norm="linf", scale=("log1p",), distance="cosine")
    if kind == "ppg":
        return FeaturePipeline(kind, norm="none", scale=("softmax", "log1p"), distance="cosine")
    if kind == "mfcc":
        # MFCCs are signed, so compressive log scaling does not apply
        return FeaturePipeline(kind, norm="l2", scale=(), distance="euclidean")
    raise ConfigError(f"no default pipeline for kind {kind!r}")


def apply_pipeline(raw: FeatureMatrix, p: Optional[FeaturePipeline] = None) -> FeatureMatrix:
    if p is None:
        p = default_pipeline(raw.kind)
    if p.kind != raw.kind:
        raise ConfigError(f"pipeline kind {p.kind!r} does not match matrix {raw.kind!r}")
    return FeatureMatrix(p.apply_rows(raw.data), raw.kind, raw.clock, metric=p.distance)


def stack(parts: Sequence[FeatureMatrix], metric: str = "euclidean") -> FeatureMatrix:
    """Framewise concatenation of already-pipelined parts."""
    if not parts:
        raise ConfigError("stack needs at least one part")
    if len(parts) == 1:
        return parts[0]
    n = parts[0].n_frames
    for p in parts[1:]:
        if p.n_frames != n:
            raise LengthMismatch(
                f"frame counts differ: {[q.n_frames for q in parts]}"
            )
        if p.clock != parts[0].clock:
            raise ConfigError("stacked parts must share a clock")
    data = np.hstack([p.data for p in parts])
    return FeatureMatrix(data, "stacked", parts[0].clock, metric=metric)


# -- FMX1 file format -------------------------------------------------------------


def save_fmx(path, fm: FeatureMatrix) -> None:
    """Binary dump: magic FMX1, u32 frames, u32 dims, u8 kind tag, f32 LE rows."""
    payload = fm.data.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(FMX_MAGIC)
        fh.write(struct.pack("<IIB", fm.n_frames, fm.dims, KIND_TAGS[fm.kind]))
        fh.write(payload)


def load_fmx(path, clock: FrameClock = DEFAULT_CLOCK) -> FeatureMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 13 or blob[:4] != FMX_MAGIC:
        raise FormatError(f"{path}: not an FMX1 file")
    frames, dims, tag = struct.unpack("<IIB", blob[4:13])
    if tag not in TAG_KINDS:
        raise FormatError(f"{path}: unknown kind tag {tag}")
    expect = 13 + frames * dims * 4
    if len(blob) != expect:
        raise FormatError(f"{path}: size {len(blob)} != expected {expect}")
    data = np.frombuffer(blob[13:], dtype="<f4").astype(np.float64)
    return FeatureMatrix(data.reshape(frames, dims), TAG_KINDS[tag], clock)


def save_csv(path, fm: FeatureMatrix) -> None:
    header = ",".join(f"{fm.kind}{i}" for i in range(fm.dims))
    np.savetxt(path, fm.data, delimiter=",", header=header, comments="")
