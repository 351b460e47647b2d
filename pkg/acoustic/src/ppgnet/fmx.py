"""FMX1 posteriorgram files: the interchange format the alignment engine
reads.  Layout: magic ``FMX1``, little-endian u32 frames, u32 dims, u8 kind
tag (4 = ppg), then float32 row-major data."""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FMX1"
KIND_PPG = 4


def save_ppg(path, rows: np.ndarray) -> None:
    rows = np.asarray(rows)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIB", rows.shape[0], rows.shape[1], KIND_PPG))
        fh.write(rows.astype("<f4").tobytes())


def load_ppg(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path}: not an FMX1 file")
    frames, dims, kind = struct.unpack("<IIB", blob[4:13])
    if kind != KIND_PPG:
        raise ValueError(f"{path}: kind tag {kind}, expected {KIND_PPG} (ppg)")
    data = np.frombuffer(blob[13:], dtype="<f4")
    if data.size != frames * dims:
        raise ValueError(f"{path}: truncated payload")
    return data.reshape(frames, dims).astype(np.float64)
