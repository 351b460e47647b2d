import numpy as np
import pytest
from hypothesis import given, strategies as st

from lyrictrack.errors import ConfigError, OutOfRange
from lyrictrack.timemap import (
    DEFAULT_CLOCK,
    FrameClock,
    TempoMap,
    WarpingPath,
    frames_to_seconds,
    map_through_path,
)


class TestFrameClock:
    def test_defaults(self):
        clock = FrameClock()
        assert clock.frame_rate == 25
        assert clock.sample_rate == 16000
        assert clock.hop == 640

    def test_inconsistent_rates_rejected(self):
        with pytest.raises(ConfigError):
            FrameClock(frame_rate=25, sample_rate=16000, hop=512)

    def test_frames_to_seconds(self):
        assert frames_to_seconds(0) == 0.0
        assert frames_to_seconds(25) == 1.0
        # 3 s OLTW window is 75 frames
        assert frames_to_seconds(75) == 3.0

    def test_negative_frame_rejected(self):
        with pytest.raises(OutOfRange):
            frames_to_seconds(-1)

    def test_seconds_round_trip(self):
        assert DEFAULT_CLOCK.seconds_to_frames(3.0) == 75.0


class TestWarpingPath:
    def test_linear_midpoint(self):
        path = WarpingPath([(0, 0), (10, 20)])
        assert map_through_path(path, 5) == 10.0

    def test_identity_endpoint(self):
        path = WarpingPath([(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)])
        assert map_through_path(path, 4) == 4.0

    def test_plateau_midpoint(self):
        path = WarpingPath([(0, 0), (1, 1), (1, 2), (1, 3), (2, 4)])
        assert map_through_path(path, 1) == 2.0

    def test_out_of_range(self):
        path = WarpingPath([(0, 0), (4, 4)])
        with pytest.raises(OutOfRange):
            path.map(4.5)
        with pytest.raises(OutOfRange):
            path.map(-0.1)

    def test_non_monotone_rejected(self):
        with pytest.raises(ValueError):
            WarpingPath([(0, 0), (1, 1), (0, 2)])

    def test_strict_rejects_jump(self):
        with pytest.raises(ValueError):
            WarpingPath([(0, 0), (2, 1)], strict=True)
        with pytest.raises(ValueError):
            WarpingPath([(1, 1), (2, 2)], strict=True)

    def test_identity_on_diagonal(self):
        path = WarpingPath([(i, i) for i in range(10)])
        for a in np.linspace(0, 9, 17):
            assert path.map(a) == pytest.approx(a)

    @given(st.lists(st.sampled_from([(1, 0), (0, 1), (1, 1)]), min_size=1, max_size=60))
    def test_map_monotone_for_any_path(self, steps):
        pairs = [(0, 0)]
        for da, db in steps:
            pairs.append((pairs[-1][0] + da, pairs[-1][1] + db))
        path = WarpingPath(pairs, strict=True)
        xs = np.linspace(0, pairs[-1][0], 50)
        ys = path.map_many(xs)
        assert np.all(np.diff(ys) >= -1e-12)

    def test_transposed(self):
        path = WarpingPath([(0, 0), (1, 2), (2, 2)])
        assert np.array_equal(path.transposed().pairs, [[0, 0], [2, 1], [2, 2]])

    def test_csv_round_trip(self, tmp_path):
        path = WarpingPath([(0, 0), (1, 1), (1, 2), (2, 3)])
        f = tmp_path / "path.csv"
        path.save_csv(f)
        assert f.read_text().splitlines()[0] == "a,b"
        assert WarpingPath.load_csv(f) == path


class TestTempoMap:
    def test_constant_120(self):
        tm = TempoMap.constant(120.0)
        assert tm.beat_at_time(1.5) == pytest.approx(3.0)

    def test_constant_60_zero(self):
        tm = TempoMap.constant(60.0)
        assert tm.beat_at_time(0.0) == 0.0

    def test_two_segments(self):
        tm = TempoMap.from_changes([(0.0, 60.0), (2.0, 120.0)])
        # 2 beats in 2 s, then 2 more beats in 1 s
        assert tm.beat_at_time(3.0) == pytest.approx(4.0)
        assert tm.time_at_beat(4.0) == pytest.approx(3.0)

    def test_before_start_rejected(self):
        tm = TempoMap.constant(100.0)
        with pytest.raises(OutOfRange):
            tm.beat_at_time(-0.5)

    def test_inconsistent_time_start_rejected(self):
        from lyrictrack.timemap import TempoSegment

        with pytest.raises(ConfigError):
            TempoMap((TempoSegment(0, 0, 60), TempoSegment(2, 1.0, 120)))

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=0.5, max_value=64.0),
                st.floats(min_value=20.0, max_value=300.0),
            ),
            min_size=1,
            max_size=6,
        ),
        st.floats(min_value=0.0, max_value=200.0),
    )
    def test_inverse_round_trip(self, deltas, beat):
        changes = []
        b = 0.0
        for db, bpm in deltas:
            changes.append((b, bpm))
            b += db
        tm = TempoMap.from_changes(changes)
        assert tm.beat_at_time(tm.time_at_beat(beat)) == pytest.approx(beat, abs=1e-9)

    def test_json_round_trip(self):
        tm = TempoMap.from_changes([(0.0, 90.0), (4.0, 180.0)])
        assert TempoMap.from_json_obj(tm.to_json_obj()) == tm
