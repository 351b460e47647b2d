"""Synthetic labeled speech-like fixtures for CI.

Real corpora with framewise phoneme labels are license-gated, so tests and
example runs use generated utterances: segment sequences drawn from the five
broad classes, rendered with class-distinctive signals (harmonic tones for
vowels, noise for fricatives, low hum for nasals, clicks for stops, zeros for
silence) and written as wav + .phn pairs.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .wavio import write_wav

SR = 16000


def _render(label: str, n: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / SR
    if label == "vowel":
        f0 = rng.uniform(150.0, 380.0)
        sig = sum(
            amp * np.sin(2 * np.pi * (k + 1) * f0 * t + rng.uniform(0, np.pi))
            for k, amp in enumerate((1.0, 0.5, 0.3, 0.15))
        )
        return 0.4 * sig / np.max(np.abs(sig))
    if label == "nasal":
        f0 = rng.uniform(90.0, 160.0)
        return 0.3 * np.sin(2 * np.pi * f0 * t) + 0.05 * np.sin(2 * np.pi * 3 * f0 * t)
    if label == "fricative":
        noise = rng.normal(0, 1, n)
        return 0.25 * np.diff(noise, prepend=0.0)  # first difference tilts high
    if label == "stop":
        sig = np.zeros(n)
        for burst in range(0, n, max(n // 3, 1)):
            sig[burst : burst + 80] = rng.normal(0, 0.5, min(80, n - burst))
        return sig
    return np.zeros(n)


def make_utterance(rng: np.random.Generator, n_segments: int = 8):
    """(samples, segments) with phoneme5 labels."""
    labels = ["silence", "vowel", "vowel", "nasal", "fricative", "stop"]
    segs = []
    chunks = []
    pos = 0
    for i in range(n_segments):
        label = "silence" if i in (0, n_segments - 1) else labels[rng.integers(1, len(labels))]
        n = int(rng.integers(2000, 6000))
        segs.append((pos, pos + n, label))
        chunks.append(_render(label, n, rng))
        pos += n
    return np.concatenate(chunks), segs


def write_fixture_dataset(root, n_utts: int = 50, seed: int = 23) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(n_utts):
        samples, segs = make_utterance(rng)
        write_wav(root / f"utt{i:03d}.wav", samples)
        (root / f"utt{i:03d}.phn").write_text(
            "".join(f"{a} {b} {lb}\n" for a, b, lb in segs), encoding="utf-8"
        )
    return root
