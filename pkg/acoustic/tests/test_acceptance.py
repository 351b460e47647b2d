"""Acceptance for the acoustic package: overfit capacity, frame-grid parity
with the alignment engine, exact streamed/batch equality, and causality."""
import subprocess
import sys

import numpy as np
import pytest
import torch

from ppgnet.infer import StreamingInference, export_ppg
from ppgnet.labels import SETS
from ppgnet.melspec import HOP, frame_count
from ppgnet.model import ModelConfig, PhonemeCrnn, save_checkpoint
from ppgnet.synthdata import write_fixture_dataset
from ppgnet.train import load_utterances, overfit_single_batch


def report(msg):
    print(f"ACCEPTANCE 10 PASS - {msg}")


@pytest.fixture(scope="module")
def fixture_items(tmp_path_factory):
    root = write_fixture_dataset(tmp_path_factory.mktemp("fix"), n_utts=6, seed=23)
    return load_utterances(root, SETS["phoneme5"], None)


@pytest.fixture(scope="module")
def small_model():
    torch.manual_seed(5)
    m = PhonemeCrnn(ModelConfig(5, hidden=64, dropout=0.0))
    m.eval()
    return m


def test_single_batch_overfit(fixture_items):
    _, losses, acc = overfit_single_batch(fixture_items[:4], steps=50)
    assert acc > 0.95
    report(f"single-batch overfit framewise accuracy {acc:.3f} > 0.95 "
           f"(loss {losses[0]:.2f} -> {losses[-1]:.3f}, default-size model)")


def test_export_frame_counts_match_engine_grid(small_model):
    rng = np.random.default_rng(10)
    lengths = rng.integers(800, 40000, 10)
    for L in lengths:
        rows = export_ppg(small_model, rng.normal(0, 0.2, int(L)))
        assert rows.shape[0] == int(L) // HOP + 1 == frame_count(int(L))
    report(f"export frame counts equal n//{HOP}+1 for 10 random lengths")


def test_ppgstream_rows_equal_export(small_model, tmp_path):
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, small_model, "phoneme5")
    rng = np.random.default_rng(11)
    # wire samples are float32; 16-bit PCM audio is exactly representable there
    x = rng.normal(0, 0.2, 12000).astype("<f4").astype(np.float64)
    proc = subprocess.Popen(
        [sys.executable, "-m", "ppgnet.cli", "serve", str(ckpt)],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
    )
    try:
        proc.stdin.write(b"HELLO PPGSTREAM 1 phoneme5\n")
        proc.stdin.flush()
        assert proc.stdout.readline() == b"HELLO PPGSTREAM 1 phoneme5\n"
        rows = []
        for i in range(0, len(x), 2560):
            chunk = x[i : i + 2560].astype("<f4")
            proc.stdin.write(f"CHUNK {len(chunk)}\n".encode() + chunk.tobytes())
            proc.stdin.flush()
            header = proc.stdout.readline().decode().split()
            n_rows = int(header[1])
            payload = proc.stdout.read(n_rows * 5 * 4)
            rows.append(np.frombuffer(payload, dtype="<f4").reshape(n_rows, 5))
        proc.stdin.write(b"FLUSH\n")
        proc.stdin.flush()
        header = proc.stdout.readline().decode().split()
        n_rows = int(header[1])
        payload = proc.stdout.read(n_rows * 5 * 4)
        rows.append(np.frombuffer(payload, dtype="<f4").reshape(n_rows, 5))
        proc.stdin.close()
        proc.wait(timeout=10)
    finally:
        proc.kill()
    streamed = np.vstack(rows)
    exported = export_ppg(small_model, x).astype("<f4")
    assert streamed.shape == exported.shape == (frame_count(len(x)), 5)
    assert np.array_equal(streamed, exported)
    report("PPGSTREAM streamed rows equal batch-exported rows exactly")


def test_causality_prefix(small_model):
    rng = np.random.default_rng(12)
    x = rng.normal(0, 0.2, 20000)
    full = export_ppg(small_model, x)
    for cut in (6400, 12800):
        prefix = export_ppg(small_model, x[:cut])
        # frames whose samples exist identically in both signals:
        # frame k needs samples through k*640 + 639
        k_safe = (cut - HOP) // HOP
        assert np.array_equal(prefix[:k_safe], full[:k_safe])
    report("posteriors for shared frames identical between prefix and full runs")
