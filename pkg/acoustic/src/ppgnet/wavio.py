"""Minimal mono WAV I/O (16-bit PCM and float32) at 16 kHz."""
from __future__ import annotations

import struct

import numpy as np


def read_wav(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise ValueError(f"{path}: not a WAV file")
    pos, fmt, data = 12, None, None
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack("<I", blob[pos + 4 : pos + 8])
        body = blob[pos + 8 : pos + 8 + size]
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)
    audio_format, channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if channels != 1 or rate != 16000:
        raise ValueError(f"{path}: need 16 kHz mono, got {channels}ch at {rate}")
    if audio_format == 1 and bits == 16:
        return np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    if audio_format == 3 and bits == 32:
        return np.frombuffer(data, dtype="<f4").astype(np.float64)
    raise ValueError(f"{path}: unsupported encoding")


def write_wav(path, samples: np.ndarray, rate: int = 16000) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE")
        fh.write(b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16))
        fh.write(b"data" + struct.pack("<I", len(data)) + data)
