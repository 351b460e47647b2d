import numpy as np
import pytest

from lyrictrack.errors import ConfigError, DimensionMismatch, EmptyInput
from lyrictrack.features import FeatureMatrix, apply_pipeline
from lyrictrack.offline import dtw_full
from lyrictrack.online import OltwConfig, OltwState, oltw_init, oltw_run, oltw_step


def songish_chroma(rng, n_notes=30):
    rows = []
    for _ in range(n_notes):
        pc = int(rng.integers(0, 12))
        tmpl = np.zeros(12)
        tmpl[pc] = 1.0
        tmpl[(pc + 7) % 12] = 0.3
        rows += [tmpl] * int(rng.integers(5, 14))
    return np.array(rows)


def tempo_warped(raw, rng, lo=0.8, hi=1.25, seg=60):
    idx = [0.0]
    while True:
        r = rng.uniform(lo, hi)
        done = False
        for _ in range(seg):
            nxt = idx[-1] + r
            if nxt > len(raw) - 1:
                done = True
                break
            idx.append(nxt)
        if done:
            return raw[np.round(idx).astype(int)], np.array(idx)


def processed(raw, rng, noise=0.02):
    noisy = np.abs(raw + rng.normal(0, noise, raw.shape))
    return apply_pipeline(FeatureMatrix(noisy, "chroma"))


class TestInit:
    def test_window_frames(self, rng):
        ref = FeatureMatrix(rng.random((75, 12)), "chroma")
        state = oltw_init(ref)
        assert state.c == 75
        assert state.j == 0 and state.t == 0

    def test_tiny_window_rejected(self, rng):
        ref = FeatureMatrix(rng.random((10, 12)), "chroma")
        with pytest.raises(ConfigError):
            oltw_init(ref, OltwConfig(window_seconds=0.04))

    def test_empty_ref_rejected(self):
        ref = FeatureMatrix(np.zeros((0, 12)), "chroma")
        with pytest.raises(EmptyInput):
            oltw_init(ref)

    def test_metric_from_matrix(self, rng):
        ref = FeatureMatrix(rng.random((80, 12)), "chroma", metric="cosine")
        assert oltw_init(ref).metric == "cosine"


class TestStep:
    def test_self_alignment_tracks_diagonal(self, rng):
        ref = processed(songish_chroma(rng), rng)
        state = oltw_init(ref)
        for k in range(ref.n_frames):
            _, pos = oltw_step(state, ref.data[k])
            if k > 5:
                assert abs(pos - k) <= 3.0

    def test_dimension_mismatch(self, rng):
        ref = FeatureMatrix(rng.random((80, 12)), "chroma")
        state = oltw_init(ref)
        with pytest.raises(DimensionMismatch):
            oltw_step(state, np.zeros(5))

    def test_constant_frames_bounded(self):
        ref = FeatureMatrix(np.full((100, 12), 0.5), "chroma")
        state = oltw_init(ref, OltwConfig(window_seconds=1.0))
        last = 0.0
        for k in range(100):
            _, pos = oltw_step(state, np.full(12, 0.5))
            assert pos >= last
            assert pos <= k + state.c
            last = pos

    def test_end_of_reference_clamps(self, rng):
        ref = processed(songish_chroma(rng, n_notes=4), rng)
        state = oltw_init(ref, OltwConfig(window_seconds=1.0))
        for k in range(ref.n_frames + 30):
            frame = ref.data[min(k, ref.n_frames - 1)]
            _, pos = oltw_step(state, frame)
            assert pos <= ref.n_frames - 1
        assert state.at_end

    def test_run_count_forces_alternation(self, rng):
        # wildly mismatched target cannot push j more than max_run_count at a time
        ref = FeatureMatrix(rng.random((200, 12)), "chroma")
        cfg = OltwConfig(window_seconds=1.0, max_run_count=3)
        state = oltw_init(ref, cfg)
        prev_j = 0
        for k in range(60):
            oltw_step(state, rng.random(12))
            assert state.j - prev_j <= cfg.max_run_count + 1
            prev_j = state.j


class TestRun:
    def test_identical_inputs_diagonal_unfiltered(self, rng):
        # raw frontier argmin stays within one frame of the diagonal; the
        # default median smoothing adds a known two-step group delay
        ref = processed(songish_chroma(rng), rng)
        path = oltw_run(ref, ref, OltwConfig(median_filter=0))
        dev = np.abs(path.pairs[:, 0] - path.pairs[:, 1])
        assert dev.max() <= 1.0

    def test_identical_inputs_near_diagonal_filtered(self, rng):
        ref = processed(songish_chroma(rng), rng)
        path = oltw_run(ref, ref)
        dev = np.abs(path.pairs[:, 0] - path.pairs[:, 1])
        assert np.median(dev) <= 2.0
        assert dev[20:].max() <= 3.0

    def test_silence_prefix_holds_position(self, rng):
        # ref carries a short leading rest, so target silence matches it at
        # zero cost and the reported position parks there until voice arrives
        raw = songish_chroma(rng)
        ref = processed(np.vstack([np.zeros((2, 12)), raw]), rng, noise=0.0)
        target = processed(np.vstack([np.zeros((10, 12)), raw]), rng, noise=0.0)
        path = oltw_run(ref, target)
        early = path.pairs[path.pairs[:, 1] < 8, 0]
        assert np.all(early < 3)

    def test_empty_target_rejected(self, rng):
        ref = FeatureMatrix(rng.random((80, 12)), "chroma")
        with pytest.raises(EmptyInput):
            oltw_run(ref, FeatureMatrix(np.zeros((0, 12)), "chroma"))

    def test_monotone_positions(self, rng):
        ref = processed(songish_chroma(rng), rng)
        target, _ = tempo_warped(songish_chroma(rng), rng)
        path = oltw_run(ref, processed(target, rng))
        assert np.all(np.diff(path.pairs[:, 0]) >= 0)

    def test_half_tempo_reaches_end(self, rng):
        raw = songish_chroma(rng, n_notes=15)
        ref = processed(raw, rng)
        target = processed(np.repeat(raw, 2, axis=0), rng)
        path = oltw_run(ref, target)
        assert path.pairs[-1, 0] >= ref.n_frames - 1 - 3

    def test_within_window_of_oracle(self, rng):
        for seed in range(5):
            r = np.random.default_rng(seed)
            raw = songish_chroma(r)
            ref = processed(raw, r)
            warped, _ = tempo_warped(raw, r)
            target = processed(warped, r)
            full, _ = dtw_full(ref, target, "euclidean")
            online = oltw_run(ref, target)
            oracle = full.transposed().map_many(np.arange(target.n_frames))
            dev = np.abs(online.pairs[:, 0] - oracle)
            assert np.median(dev) <= 3.0
            assert dev.max() <= oltw_init(ref).c

    def test_linear_complexity_bound(self, rng):
        raw = songish_chroma(rng)
        ref = processed(raw, rng)
        warped, _ = tempo_warped(raw, rng)
        target = processed(warped, rng)
        state = oltw_init(ref)
        for k in range(target.n_frames):
            oltw_step(state, target.data[k])
        bound = (ref.n_frames + target.n_frames) * state.c * 3
        assert state.cells_evaluated <= bound

    def test_band_memory_bounded(self, rng):
        ref = FeatureMatrix(rng.random((2000, 12)), "chroma")
        cfg = OltwConfig(window_seconds=1.0)
        state = oltw_init(ref, cfg)
        for k in range(800):
            oltw_step(state, rng.random(12))
            assert state.band_cells <= 3 * state.c * state.c + 2 * state.c

    def test_deterministic(self, rng):
        raw = songish_chroma(rng)
        ref = processed(raw, rng)
        warped, _ = tempo_warped(raw, rng)
        target = processed(warped, rng)
        p1 = oltw_run(ref, target)
        p2 = oltw_run(ref, target)
        assert p1 == p2
