import itertools
import math

import numpy as np
import pytest

from lyrictrack.errors import BandInfeasible, EmptyInput, OutOfRange, ConfigError
from lyrictrack.features import FeatureMatrix, metric_rows
from lyrictrack.offline import (
    BlockCost,
    DlncoParams,
    DtwConfig,
    dlnco,
    dtw_full,
    generate_pseudo_labels,
    mrms_dtw,
    offline_cost,
)
from lyrictrack.score import VocalNote, build_timeline
from lyrictrack.timemap import TempoMap, WarpingPath


def brute_force_dtw_cost(dmat):
    """Exhaustive enumeration of every monotone path (steps (1,1),(1,0),(0,1))."""
    n, m = dmat.shape
    best = [math.inf]

    def walk(a, b, cost):
        if a == n - 1 and b == m - 1:
            best[0] = min(best[0], cost)
            return
        if a + 1 < n and b + 1 < m:
            walk(a + 1, b + 1, cost + dmat[a + 1, b + 1])
        if a + 1 < n:
            walk(a + 1, b, cost + dmat[a + 1, b])
        if b + 1 < m:
            walk(a, b + 1, cost + dmat[a, b + 1])

    walk(0, 0, dmat[0, 0])
    return best[0]


def cost_matrix(X, Y, metric="euclidean"):
    return np.array([metric_rows(x, Y, metric) for x in X])


def path_cost(path, dmat):
    return sum(dmat[a, b] for a, b in path.pairs)


class TestDtwFull:
    def test_identity_diagonal(self, rng):
        X = rng.normal(0, 1, (6, 3))
        path, cost = dtw_full(X, X.copy())
        assert cost == pytest.approx(0.0, abs=1e-12)
        assert np.array_equal(path.pairs, [(i, i) for i in range(6)])

    def test_degenerate_single_frame(self, rng):
        X = rng.normal(0, 1, (1, 3))
        Y = rng.normal(0, 1, (7, 3))
        path, _ = dtw_full(X, Y)
        assert len(path) == 7
        assert np.all(path.pairs[:, 0] == 0)

    def test_matches_brute_force(self, rng):
        for _ in range(25):
            n, m = rng.integers(1, 8, 2)
            X = rng.normal(0, 1, (n, 4))
            Y = rng.normal(0, 1, (m, 4))
            path, cost = dtw_full(X, Y)
            dmat = cost_matrix(X, Y)
            assert cost == pytest.approx(brute_force_dtw_cost(dmat), abs=1e-9)
            assert cost == pytest.approx(path_cost(path, dmat), abs=1e-9)

    def test_never_beaten_by_random_monotone_paths(self, rng):
        X = rng.normal(0, 1, (10, 3))
        Y = rng.normal(0, 1, (12, 3))
        _, cost = dtw_full(X, Y)
        dmat = cost_matrix(X, Y)
        for _ in range(100):
            a = b = 0
            c = dmat[0, 0]
            while (a, b) != (9, 11):
                choices = []
                if a < 9 and b < 11:
                    choices.append((1, 1))
                if a < 9:
                    choices.append((1, 0))
                if b < 11:
                    choices.append((0, 1))
                da, db = choices[rng.integers(0, len(choices))]
                a, b = a + da, b + db
                c += dmat[a, b]
            assert cost <= c + 1e-9

    def test_swap_symmetry(self, rng):
        for _ in range(10):
            X = rng.normal(0, 1, (7, 3))
            Y = rng.normal(0, 1, (9, 3))
            path_xy, cost_xy = dtw_full(X, Y)
            path_yx, cost_yx = dtw_full(Y, X)
            assert cost_xy == pytest.approx(cost_yx, rel=1e-12)
            # the transposed swapped path is also optimal on the original matrix
            dmat = cost_matrix(X, Y)
            assert path_cost(path_yx.transposed(), dmat) == pytest.approx(cost_xy, abs=1e-9)

    def test_empty_rejected(self, rng):
        with pytest.raises(EmptyInput):
            dtw_full(np.zeros((0, 3)), rng.normal(0, 1, (4, 3)))

    def test_band_restricts(self, rng):
        X = rng.normal(0, 1, (6, 2))
        Y = rng.normal(0, 1, (6, 2))
        lo = np.arange(6, dtype=np.int64)
        hi = np.arange(6, dtype=np.int64)
        cfg = DtwConfig(band=(lo, hi))
        path, _ = dtw_full(X, Y, cfg=cfg)
        assert np.array_equal(path.pairs, [(i, i) for i in range(6)])

    def test_band_infeasible(self, rng):
        X = rng.normal(0, 1, (4, 2))
        Y = rng.normal(0, 1, (4, 2))
        lo = np.array([1, 1, 1, 1], dtype=np.int64)
        hi = np.array([3, 3, 3, 3], dtype=np.int64)
        with pytest.raises(BandInfeasible):
            dtw_full(X, Y, cfg=DtwConfig(band=(lo, hi)))

    def test_diagonal_tie_break_preferred(self):
        # all-equal costs: the diagonal must win ties
        X = np.zeros((4, 2))
        Y = np.zeros((4, 2))
        path, _ = dtw_full(X, Y)
        assert np.array_equal(path.pairs, [(i, i) for i in range(4)])

    def test_block_cost(self, rng):
        X = rng.random((5, 4))
        Y = rng.random((6, 4))
        model = BlockCost(((slice(0, 2), "cosine", 1.0), (slice(2, 4), "euclidean", 2.0)))
        path, cost = dtw_full(X, Y, metric=model)
        dmat = np.array([model.rows(x, Y) for x in X])
        assert cost == pytest.approx(brute_force_dtw_cost(dmat), abs=1e-9)


class TestDlnco:
    def test_constant_chroma_zero(self):
        fm = FeatureMatrix(np.full((30, 12), 0.7), "chroma")
        out = dlnco(fm)
        assert np.all(out.data == 0.0)

    def test_single_step_decay(self):
        data = np.zeros((40, 12))
        data[20:, 3] = 1.0
        out = dlnco(FeatureMatrix(data, "chroma"))
        expect = [math.sqrt(1.0 - i / 10.0) for i in range(10)]
        assert out.data[20, 3] == pytest.approx(1.0)
        for i in range(1, 10):
            assert out.data[20 + i, 3] == pytest.approx(expect[i], rel=1e-12)
        assert np.all(out.data[31:, 3] == 0.0)
        other = np.delete(out.data, 3, axis=1)
        assert np.all(other == 0.0)

    def test_simultaneous_steps_symmetric(self):
        data = np.zeros((40, 12))
        data[15:, 2] = 0.5
        data[15:, 7] = 0.5
        out = dlnco(FeatureMatrix(data, "chroma"))
        assert np.array_equal(out.data[:, 2], out.data[:, 7])

    def test_range_and_floor(self, rng):
        data = np.abs(rng.normal(0, 1, (100, 12)))
        out = dlnco(FeatureMatrix(data, "chroma"))
        assert np.all(out.data >= 0.0)
        assert np.all(out.data <= 1.0 + 1e-12)


class TestOfflineCost:
    def _mats(self, rng, n=20, m=24):
        rc = FeatureMatrix(rng.random((n, 12)), "chroma")
        sc = FeatureMatrix(rng.random((m, 12)), "chroma")
        rd = dlnco(rc)
        sd = dlnco(sc)
        return rc, sc, rd, sd

    def test_identical_inputs_zero_diag(self, rng):
        rc, _, rd, _ = self._mats(rng)
        score, ref, model = offline_cost(rc, rc, rd, rd)
        for i in range(5):
            assert model.rows(score[i], ref[i : i + 1])[0] == pytest.approx(0.0, abs=1e-9)

    def test_zero_dlnco_reduces_to_chroma(self, rng):
        rc, sc, _, _ = self._mats(rng)
        zero = FeatureMatrix(np.zeros((rc.n_frames, 12)), "dlnco")
        zero_s = FeatureMatrix(np.zeros((sc.n_frames, 12)), "dlnco")
        score, ref, model = offline_cost(rc, sc, zero, zero_s)
        d = model.rows(score[0], ref)
        chroma_only = metric_rows(score[0][:12], ref[:, :12], "cosine")
        assert np.allclose(d, chroma_only)

    def test_dlnco_weight_linear(self, rng):
        rc, sc, rd, sd = self._mats(rng)
        score, ref, m1 = offline_cost(rc, sc, rd, sd, dlnco_weight=1.0)
        _, _, m2 = offline_cost(rc, sc, rd, sd, dlnco_weight=2.0)
        d1 = m1.rows(score[0], ref)
        d2 = m2.rows(score[0], ref)
        chroma_part = metric_rows(score[0][:12], ref[:, :12], "cosine")
        assert np.allclose(d2 - chroma_part, 2.0 * (d1 - chroma_part))


class TestMrms:
    def test_identical_inputs_diagonal(self, rng):
        X = rng.random((70, 12))
        path = mrms_dtw(X, X.copy(), levels=(32, 8, 1))
        assert np.array_equal(path.pairs, [(i, i) for i in range(70)])

    def test_small_equals_full(self, rng):
        for _ in range(8):
            n = int(rng.integers(32, 65))
            m = int(rng.integers(32, 65))
            X = rng.normal(0, 1, (n, 6))
            Y = rng.normal(0, 1, (m, 6))
            full_path, _ = dtw_full(X, Y)
            ms_path = mrms_dtw(X, Y)
            assert ms_path == full_path

    def test_two_x_tempo(self, rng):
        X = np.repeat(np.eye(12), 8, axis=0)[:96] + rng.normal(0, 0.01, (96, 12))
        Y = np.repeat(X, 2, axis=0)
        path = mrms_dtw(X, Y, levels=(32, 8, 1), margin=25)
        devs = np.abs(path.pairs[:, 1] - 2.0 * path.pairs[:, 0])
        assert np.quantile(devs, 0.95) <= 2.0 + 1e-9

    def test_too_short_rejected(self, rng):
        with pytest.raises(EmptyInput):
            mrms_dtw(rng.random((10, 4)), rng.random((40, 4)))

    def test_bad_levels_rejected(self, rng):
        X = rng.random((64, 4))
        with pytest.raises(ConfigError):
            mrms_dtw(X, X, levels=(8, 32, 1))


class TestPseudoLabels:
    def _timeline(self):
        notes = [
            VocalNote(0.0, 1.0, 60, "Gu", "start"),
            VocalNote(1.0, 1.0, 62, "te", "end"),
            VocalNote(2.0, 2.0, 64, "Nacht", "single"),
        ]
        return build_timeline(notes, TempoMap.constant(60.0))

    def test_identity_path(self):
        tl = self._timeline()
        path = WarpingPath([(i, i) for i in range(150)])
        out = generate_pseudo_labels(tl, path)
        for note in out.iter_notes():
            assert note.ref_time == pytest.approx(note.score_time)

    def test_linear_double(self):
        tl = self._timeline()
        path = WarpingPath([(i, 2 * i) for i in range(120)])
        out = generate_pseudo_labels(tl, path)
        words = list(out.iter_words())
        # note at score 2.0 s (frame 50) maps to ref frame 100 -> 4.0 s
        assert words[1].ref_time == pytest.approx(4.0)

    def test_monotone(self):
        tl = self._timeline()
        pairs = [(0, 0)]
        rng = np.random.default_rng(7)
        while pairs[-1][0] < 120:
            da, db = [(1, 0), (0, 1), (1, 1)][rng.integers(0, 3)]
            pairs.append((pairs[-1][0] + da, pairs[-1][1] + db))
        out = generate_pseudo_labels(tl, WarpingPath(pairs))
        times = [n.ref_time for n in out.iter_notes()]
        assert all(b >= a for a, b in zip(times, times[1:]))

    def test_out_of_range(self):
        tl = self._timeline()
        path = WarpingPath([(i, i) for i in range(10)])  # ends at 0.36 s
        with pytest.raises(OutOfRange):
            generate_pseudo_labels(tl, path)
