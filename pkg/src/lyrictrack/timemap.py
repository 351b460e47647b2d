"""Position arithmetic: frame/second/beat conversions and warping-path lookups.

Everything here is a pure function over immutable values; fractional frame
positions are carried as floats and only rounded at display or serialization
boundaries.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, OutOfRange


@dataclass(frozen=True)
class FrameClock:
    """Fixed relationship between samples and analysis frames.

    The engine runs at 25 frames per second: 16 kHz audio with a hop of
    640 samples.  ``sample_rate == frame_rate * hop`` must hold exactly.
    """

    frame_rate: int = 25
    sample_rate: int = 16000
    hop: int = 640

    def __post_init__(self):
        if min(self.frame_rate, self.sample_rate, self.hop) <= 0:
            raise ConfigError("clock fields must be positive integers")
        if self.sample_rate != self.frame_rate * self.hop:
            raise ConfigError(
                f"sample_rate {self.sample_rate} != frame_rate {self.frame_rate}"
                f" * hop {self.hop}"
            )

    def frames_to_seconds(self, f: float) -> float:
        if f < 0:
            raise OutOfRange(f"negative frame index {f}")
        return f / self.frame_rate

    def seconds_to_frames(self, t: float) -> float:
        if t < 0:
            raise OutOfRange(f"negative time {t}")
        return t * self.frame_rate


DEFAULT_CLOCK = FrameClock()

# Steps a DTW path may take, as (delta_a, delta_b).
DEFAULT_STEPS = ((1, 1), (1, 0), (0, 1))


class WarpingPath:
    """Monotone alignment between two frame sequences.

    ``pairs`` is an (K, 2) integer array of (a, b) frame indices.  Both
    coordinates are non-decreasing.  Paths produced by offline DTW are
    *strict*: they start at (0, 0) and move by unit steps; paths recorded
    from the online aligner are only monotone.
    """

    def __init__(self, pairs, strict: bool = False, steps=DEFAULT_STEPS):
        arr = np.asarray(pairs, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
            raise ValueError("path must be a non-empty list of (a, b) pairs")
        diffs = np.diff(arr, axis=0)
        if np.any(diffs < 0):
            raise ValueError("path coordinates must be non-decreasing")
        if np.any((diffs[:, 0] == 0) & (diffs[:, 1] == 0)):
            raise ValueError("path may not repeat a pair")
        if strict:
            if arr[0, 0] != 0 or arr[0, 1] != 0:
                raise ValueError("strict path must start at (0, 0)")
            allowed = {tuple(s) for s in steps}
            bad = [i for i, d in enumerate(diffs) if tuple(d) not in allowed]
            if bad:
                raise ValueError(f"step {bad[0]} outside allowed step set")
        self.pairs = arr
        self.pairs.setflags(write=False)

    def __len__(self):
        return len(self.pairs)

    def __eq__(self, other):
        return isinstance(other, WarpingPath) and np.array_equal(
            self.pairs, other.pairs
        )

    def __repr__(self):
        return f"WarpingPath({len(self.pairs)} pairs, a..{self.pairs[-1, 0]}, b..{self.pairs[-1, 1]})"

    def transposed(self) -> "WarpingPath":
        """Same alignment read in the opposite direction (b over a)."""
        return WarpingPath(self.pairs[:, ::-1])

    # interpolation anchors: one (a, mid-b) point per distinct a
    def _anchors(self):
        a = self.pairs[:, 0]
        b = self.pairs[:, 1].astype(np.float64)
        # first/last occurrence of each distinct a; b is sorted within a run
        uniq, first = np.unique(a, return_index=True)
        last = np.append(first[1:], len(a)) - 1
        return uniq.astype(np.float64), (b[first] + b[last]) / 2.0

    def map(self, a_pos: float) -> float:
        """Map a (fractional) a-position to the b axis.

        Piecewise-linear in a; where several pairs share one a value the
        midpoint of their b range is used, which keeps the map single-valued
        and monotone.
        """
        a0, a1 = self.pairs[0, 0], self.pairs[-1, 0]
        if not (a0 <= a_pos <= a1):
            raise OutOfRange(f"position {a_pos} outside path span [{a0}, {a1}]")
        xs, ys = self._anchors()
        return float(np.interp(a_pos, xs, ys))

    def map_many(self, a_positions) -> np.ndarray:
        a_positions = np.asarray(a_positions, dtype=np.float64)
        a0, a1 = self.pairs[0, 0], self.pairs[-1, 0]
        if np.any(a_positions < a0) or np.any(a_positions > a1):
            raise OutOfRange("position outside path span")
        xs, ys = self._anchors()
        return np.interp(a_positions, xs, ys)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["a", "b"])
            writer.writerows(self.pairs.tolist())

    @classmethod
    def load_csv(cls, path) -> "WarpingPath":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["a", "b"]:
                raise ValueError(f"bad warping path header: {header!r}")
            pairs = [(int(row[0]), int(row[1])) for row in reader]
        return cls(pairs)


def frames_to_seconds(f: float, clock: FrameClock = DEFAULT_CLOCK) -> float:
    return clock.frames_to_seconds(f)


def seconds_to_frames(t: float, clock: FrameClock = DEFAULT_CLOCK) -> float:
    return clock.seconds_to_frames(t)


def map_through_path(path: WarpingPath, a_pos: float) -> float:
    return path.map(a_pos)


@dataclass(frozen=True)
class TempoSegment:
    beat_start: float
    time_start: float
    bpm: float


@dataclass(frozen=True)
class TempoMap:
    """Piecewise-constant tempo: maps beats to seconds and back.

    Segments are sorted by beat; each segment's ``time_start`` must equal the
    integrated duration of everything before it.  The last segment extends
    indefinitely.
    """

    segments: tuple[TempoSegment, ...] = field(
        default_factory=lambda: (TempoSegment(0.0, 0.0, 120.0),)
    )

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("tempo map needs at least one segment")
        prev = None
        for seg in self.segments:
            if seg.bpm <= 0:
                raise ConfigError(f"bpm must be positive, got {seg.bpm}")
            if prev is not None:
                if seg.beat_start <= prev.beat_start:
                    raise ConfigError("segments must be sorted by beat_start")
                expect = prev.time_start + (seg.beat_start - prev.beat_start) * 60.0 / prev.bpm
                if abs(seg.time_start - expect) > 1e-6:
                    raise ConfigError(
                        f"segment at beat {seg.beat_start}: time_start {seg.time_start}"
                        f" inconsistent, expected {expect}"
                    )
            prev = seg

    @classmethod
    def from_changes(cls, changes) -> "TempoMap":
        """Build from (beat, bpm) change points; time offsets are integrated.

        Duplicate beats keep the last bpm; tempo before the first change
        point defaults to that change's bpm.
        """
        dedup = {}
        for beat, bpm in sorted(changes):
            dedup[float(beat)] = float(bpm)
        if not dedup:
            return cls()
        points = sorted(dedup.items())
        if points[0][0] != 0.0:
            points.insert(0, (0.0, points[0][1]))
        segs = [TempoSegment(0.0, 0.0, points[0][1])]
        t = 0.0
        prev_beat, prev_bpm = points[0]
        for beat, bpm in points[1:]:
            t += (beat - prev_beat) * 60.0 / prev_bpm
            if bpm != prev_bpm:
                segs.append(TempoSegment(beat, t, bpm))
            prev_beat, prev_bpm = beat, bpm
        return cls(tuple(segs))

    @classmethod
    def constant(cls, bpm: float) -> "TempoMap":
        return cls((TempoSegment(0.0, 0.0, bpm),))

    def time_at_beat(self, b: float) -> float:
        if b < self.segments[0].beat_start:
            raise OutOfRange(f"beat {b} before tempo map start")
        seg = self._segment_for_beat(b)
        return seg.time_start + (b - seg.beat_start) * 60.0 / seg.bpm

    def beat_at_time(self, t: float) -> float:
        if t < self.segments[0].time_start:
            raise OutOfRange(f"time {t} before tempo map start")
        seg = self._segment_for_time(t)
        return seg.beat_start + (t - seg.time_start) * seg.bpm / 60.0

    def _segment_for_beat(self, b: float) -> TempoSegment:
        lo = 0
        for i, seg in enumerate(self.segments):
            if seg.beat_start <= b:
                lo = i
            else:
                break
        return self.segments[lo]

    def _segment_for_time(self, t: float) -> TempoSegment:
        lo = 0
        for i, seg in enumerate(self.segments):
            if seg.time_start <= t:
                lo = i
            else:
                break
        return self.segments[lo]

    def to_json_obj(self):
        return [
            {"beat": s.beat_start, "time": s.time_start, "bpm": s.bpm}
            for s in self.segments
        ]

    @classmethod
    def from_json_obj(cls, obj) -> "TempoMap":
        return cls(tuple(TempoSegment(s["beat"], s["time"], s["bpm"]) for s in obj))


def beat_at_time(tm: TempoMap, t: float) -> float:
    return tm.beat_at_time(t)


def time_at_beat(tm: TempoMap, b: float) -> float:
    return tm.time_at_beat(b)
