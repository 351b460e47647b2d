"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured numbers (run with -v -s or -rA to see them)."""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from lyrictrack.audio import AudioClip, chunk_stream, load_wav
from lyrictrack.dataset import build_synthetic_dataset
from lyrictrack.evaluate import (
    OnsetAnnotation,
    aae_mae_std,
    pco,
    run_benchmark,
)
from lyrictrack.features import (
    FeatureMatrix,
    StreamingStft,
    apply_pipeline,
    chroma_rows,
    log1p_scale,
    mel_rows,
    save_fmx,
    load_fmx,
    stft,
)
from lyrictrack.offline import dtw_full, mrms_dtw
from lyrictrack.online import OltwConfig, oltw_init, oltw_run
from lyrictrack.score import LyricsTimeline, VocalNote, build_timeline
from lyrictrack.timemap import TempoMap, WarpingPath
from lyrictrack.tracker import track_file

from test_offline import brute_force_dtw_cost, cost_matrix
from test_online import processed, songish_chroma, tempo_warped


def report(n, msg):
    print(f"ACCEPTANCE {n} PASS - {msg}")


@pytest.fixture(scope="module")
def benchmark_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance_ds")
    t0 = time.perf_counter()
    build_synthetic_dataset(root, n_songs=8, seed=2024, n_phrases=4)
    return root, time.perf_counter() - t0


def test_criterion_1_dtw_optimality():
    rng = np.random.default_rng(100)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n, m = rng.integers(1, 9, 2)
        X = rng.normal(0, 1, (int(n), 3))
        Y = rng.normal(0, 1, (int(m), 3))
        path, cost = dtw_full(X, Y)
        expect = brute_force_dtw_cost(cost_matrix(X, Y))
        worst = max(worst, abs(cost - expect))
        assert abs(cost - expect) <= 1e-9
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    report(1, f"200 instances exact vs enumeration (worst gap {worst:.2e}) in {elapsed:.1f}s")


def test_criterion_2_mrms_equivalence():
    rng = np.random.default_rng(200)
    for trial in range(10):
        n = int(rng.integers(32, 65))
        m = int(rng.integers(32, 65))
        X = rng.normal(0, 1, (n, 6))
        Y = rng.normal(0, 1, (m, 6))
        full_path, _ = dtw_full(X, Y)
        assert mrms_dtw(X, Y) == full_path
    report(2, "multi-scale path == full path exactly on 10 pairs up to 64 frames")


def test_criterion_3_oltw_vs_oracle():
    t0 = time.perf_counter()
    devs, maxima = [], []
    window = None
    for seed in range(50):
        rng = np.random.default_rng(seed)
        raw = songish_chroma(rng, n_notes=30)
        ref = processed(raw, rng)
        warped, _ = tempo_warped(raw, rng)
        target = processed(warped, rng)
        full, _ = dtw_full(ref, target, "euclidean")
        online = oltw_run(ref, target)
        oracle = full.transposed().map_many(np.arange(target.n_frames))
        dev = np.abs(online.pairs[:, 0] - oracle)
        devs.append(dev)
        maxima.append(float(dev.max()))
        window = oltw_init(ref).c
        assert dev.max() <= window
    pooled = np.concatenate(devs)
    elapsed = time.perf_counter() - t0
    assert np.median(pooled) <= 3.0
    assert elapsed < 30.0
    report(
        3,
        f"50 warped pairs: median per-step dev {np.median(pooled):.1f} <= 3 frames, "
        f"max {max(maxima):.0f} <= window {window}, in {elapsed:.1f}s",
    )


def test_criterion_4_log1p_contract():
    v = log1p_scale(np.array([1.0, 0.0]))
    assert v[0] == pytest.approx(math.log(6.0) / 4.0, rel=1e-12)
    assert v[0] < 0.5
    assert v[1] == 0.0
    rng = np.random.default_rng(400)
    pairs = rng.uniform(0, 50, (1000, 2))
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    out_lo = log1p_scale(lo)
    out_hi = log1p_scale(hi)
    strict = pairs[:, 0] != pairs[:, 1]
    assert np.all(out_lo[strict] < out_hi[strict])
    report(4, f"log1p(1)=ln6/4={v[0]:.5f}<0.5, log1p(0)=0, monotone on 1000 pairs")


def test_criterion_5_metric_oracles():
    gt = np.array([1.0, 2.0, 3.0])
    est = gt + np.array([0.1, 0.5, 0.05])
    aae, mae, std = aae_mae_std(est, gt)
    assert aae == pytest.approx(650.0 / 3.0, abs=1e-6)
    assert mae == pytest.approx(100.0, abs=1e-6)
    assert std == pytest.approx(math.sqrt(365000.0) / 3.0, abs=1e-6)
    assert pco(est, gt, 0.2) == pytest.approx(200.0 / 3.0)
    assert pco(est, gt, 1.0) == 100.0
    assert aae_mae_std(gt, gt) == (0.0, 0.0, 0.0)
    single = aae_mae_std([1.042], [1.0])
    assert single[0] == pytest.approx(42.0) and single[2] == pytest.approx(0.0, abs=1e-9)
    rng = np.random.default_rng(500)
    for _ in range(20):
        g = np.sort(rng.uniform(0, 30, 25))
        e = g + rng.normal(0, 0.4, 25)
        vals = [pco(e, g, th) for th in (0.2, 0.3, 0.5, 1.0)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
    report(5, "AAE/MAE/Std/PCO worked examples exact; PCO monotone in theta")


def test_criterion_6_end_to_end_benchmark(benchmark_dataset):
    root, gen_s = benchmark_dataset
    t0 = time.perf_counter()
    rep, _ = run_benchmark(
        root, ["chroma", "chroma+ppg:phoneme5"], phases=("offline", "online")
    )
    elapsed = gen_s + time.perf_counter() - t0
    avg = rep.averages()
    stacked = avg[("online", "chroma+ppg:phoneme5")]
    chroma_only = avg[("online", "chroma")]
    assert stacked.aae_ms <= 200.0
    assert stacked.pco[0.5] >= 90.0
    assert chroma_only.aae_ms > stacked.aae_ms
    assert elapsed < 300.0
    report(
        6,
        f"8-song suite: chroma+phoneme5 AAE {stacked.aae_ms:.0f}ms <= 200, "
        f"PCO@500 {stacked.pco[0.5]:.1f}% >= 90, chroma-only {chroma_only.aae_ms:.0f}ms "
        f"strictly worse, in {elapsed:.0f}s < 300s",
    )


def test_criterion_7_realtime_budget(benchmark_dataset, tmp_path):
    from click.testing import CliRunner
    from lyrictrack.cli import main

    root, _ = benchmark_dataset
    all_chunk_ms = []
    for song in sorted(root.iterdir()):
        prep = tmp_path / f"prep_{song.name}"
        r = CliRunner().invoke(
            main,
            ["prepare", str(song / "score.musicxml"), str(song / "ref.wav"),
             str(prep), "--lyrics", str(song / "lyrics.txt")],
        )
        assert r.exit_code == 0, r.output
        kwargs = dict(
            feature_name="chroma+ppg:phoneme5",
            ppg_spec=f"file:{song / 'ppg_target.fmx'}",
            ref_ppg_spec=f"file:{song / 'ppg_ref.fmx'}",
        )
        ev_rt, run_rt = track_file(song / "target.wav", prep, pace="realtime", **kwargs)
        ev_fast, _ = track_file(song / "target.wav", prep, pace="fast", **kwargs)
        assert [e.comparable() for e in ev_rt] == [e.comparable() for e in ev_fast]
        all_chunk_ms.extend(1000.0 * np.array(run_rt.chunk_seconds))
    p95 = float(np.percentile(all_chunk_ms, 95))
    assert p95 < 160.0
    report(
        7,
        f"realtime pacing over 8 songs: p95 chunk {p95:.1f}ms < 160ms "
        f"(rtf {p95 / 160:.3f}); fast == realtime event sequences",
    )


def test_criterion_8_streamed_feature_equality():
    rng = np.random.default_rng(800)
    for trial in range(10):
        n = int(rng.integers(1500, 60000))
        clip = AudioClip(rng.normal(0, 0.2, n))
        spec = stft(clip)
        want_c, want_m = chroma_rows(spec), mel_rows(spec)
        s = StreamingStft()
        got_c, got_m = [], []
        for chunk in chunk_stream(clip):
            rows = s.feed(chunk.samples)
            got_c.append(chroma_rows(rows))
            got_m.append(mel_rows(rows))
        rows = s.flush()
        got_c.append(chroma_rows(rows))
        got_m.append(mel_rows(rows))
        assert np.array_equal(np.vstack(got_c), want_c)
        assert np.array_equal(np.vstack(got_m), want_m)
    report(8, "chunk-fed chroma and mel bit-identical to whole-file on 10 clips")


def test_criterion_9_format_round_trips(tmp_path):
    rng = np.random.default_rng(900)
    # FMX1
    data = rng.random((9, 12)).astype(np.float32).astype(np.float64)
    fm = FeatureMatrix(data, "chroma")
    save_fmx(tmp_path / "a.fmx", fm)
    back = load_fmx(tmp_path / "a.fmx")
    assert np.array_equal(back.data, fm.data) and back.kind == fm.kind
    # warping path CSV
    pairs = [(0, 0)]
    for _ in range(300):
        da, db = [(1, 0), (0, 1), (1, 1)][rng.integers(0, 3)]
        pairs.append((pairs[-1][0] + da, pairs[-1][1] + db))
    wp = WarpingPath(pairs)
    wp.save_csv(tmp_path / "p.csv")
    assert WarpingPath.load_csv(tmp_path / "p.csv") == wp
    # timeline JSON
    notes = [
        VocalNote(0.0, 1.0, 60, "Gu", "start"),
        VocalNote(1.0, 1.0, 62, "te", "end"),
        VocalNote(2.0, 2.0, 64, "Nacht", "single"),
    ]
    tl = build_timeline(notes, TempoMap.from_changes([(0.0, 90.0), (2.0, 120.0)]), "Gute Nacht\n")
    for i, nu in enumerate(tl.iter_notes()):
        nu.ref_time = 0.123456789 + i
    tl.save_json(tmp_path / "t.json")
    back_tl = LyricsTimeline.load_json(tmp_path / "t.json")
    assert back_tl.to_json_obj() == tl.to_json_obj()
    # annotation CSV
    ann = OnsetAnnotation(
        np.array([0.1234567890123, 1.5, 2.75]),
        np.array([60, 62, 64]),
        ("a", "b", "c"),
        np.array([0, 0, 1]),
        np.array([0, 0, 0]),
    )
    ann.save_csv(tmp_path / "ann.csv")
    back_ann = OnsetAnnotation.load_csv(tmp_path / "ann.csv")
    assert np.array_equal(back_ann.times, ann.times)
    assert np.array_equal(back_ann.word_index, ann.word_index)
    assert back_ann.syllables == ann.syllables
    report(9, "FMX1, path CSV, timeline JSON, annotation CSV all round-trip exactly")
