"""Real-time tracking loop: 160 ms chunks in, lyric-position events out.

A producer thread feeds AudioChunks through a bounded queue (capacity 8); the
consumer owns all alignment state: the rolling STFT buffer, incremental
feature extraction, the posteriorgram provider, the online aligner, and the
position-to-lyric mapping.  Posteriors come from a precomputed file or an
external process speaking the PPGSTREAM protocol.  A frame whose posteriors
have not arrived within the soft deadline is matched on chroma alone and its
events are flagged, so a stalled provider degrades fidelity instead of
blocking the audio cadence.
"""
from __future__ import annotations

import json
import queue
import shlex
import socket
import subprocess
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .audio import AudioChunk, AudioClip, CHUNK_SAMPLES, chunk_stream, load_wav
from .errors import ClockMismatch, ConfigError, FormatError, ProviderStall
from .evaluate import FeatureCombo, combo_features, resolve_pipelines
from .features import (
    FeatureMatrix,
    StreamingStft,
    chroma_rows,
    default_pipeline,
    frame_count,
    mel_alignment_rows,
    mel_rows,
    mfcc_rows,
)
from .online import OltwConfig, OltwState
from .ppg import PhonemeSet, PpgMatrix, get_set, load_ppg
from .score import LyricsTimeline
from .timemap import DEFAULT_CLOCK, FrameClock, TempoMap, WarpingPath

PPG_DEADLINE_S = 0.120
QUEUE_CAPACITY = 8
PROTOCOL_HELLO = "HELLO PPGSTREAM 1"


@dataclass(frozen=True)
class LyricEvent:
    wall_time: float
    target_time: float
    ref_time: float
    score_beat: float
    unit_level: str  # line | word | note
    unit_index: int
    unit_text: str
    latency: float
    ppg_fallback: bool = False

    def to_json_obj(self):
        return {
            "wall_time": self.wall_time,
            "target_time": self.target_time,
            "ref_time": self.ref_time,
            "score_beat": self.score_beat,
            "unit": {"level": self.unit_level, "index": self.unit_index, "text": self.unit_text},
            "latency": self.latency,
            "ppg_fallback": self.ppg_fallback,
        }

    def to_jsonl(self) -> str:
        return json.dumps(self.to_json_obj(), ensure_ascii=False)

    def comparable(self) -> str:
        """Serialization without wall-clock fields, for determinism checks."""
        obj = self.to_json_obj()
        del obj["wall_time"]
        del obj["latency"]
        return json.dumps(obj, ensure_ascii=False)


# -- posteriorgram providers -----------------------------------------------------


class FilePpgProvider:
    """Precomputed posteriors, served in frame order."""

    def __init__(self, ppg: PpgMatrix):
        self.ppg = ppg
        self.dims = ppg.data.shape[1]
        self._cursor = 0

    @classmethod
    def from_file(cls, path, pset: PhonemeSet) -> "FilePpgProvider":
        return cls(load_ppg(path, pset))

    def start(self, expected_frames: Optional[int]) -> None:
        if expected_frames is not None and self.ppg.n_frames != expected_frames:
            raise ClockMismatch(
                f"PPG file has {self.ppg.n_frames} frames, audio needs {expected_frames}"
            )

    def feed(self, samples: np.ndarray) -> None:
        pass

    def poll(self, frame_end: int, deadline_s: float) -> np.ndarray:
        end = min(frame_end, self.ppg.n_frames)
        rows = self.ppg.data[self._cursor : end]
        self._cursor = end
        return rows

    def flush(self) -> None:
        pass

    def close(self) -> None:
        pass


class StreamPpgProvider:
    """Client for an external PPGSTREAM process or TCP service.

    Protocol, all little-endian: mutual ``HELLO PPGSTREAM 1 <set>`` lines,
    then requests ``CHUNK <n_samples>\\n`` + n_samples float32 samples, each
    answered by ``ROWS <n_rows> <n_dims>\\n`` + float32 row-major posteriors
    for all newly completed frames.  A final ``FLUSH\\n`` request returns the
    remaining frames at end of stream.
    """

    def __init__(self, set_name: str, command: Optional[str] = None,
                 address: Optional[tuple[str, int]] = None):
        self.set_name = set_name
        self.dims = get_set(set_name).size
        self._proc = None
        self._sock = None
        if command is not None:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
            self._w = self._proc.stdin
            self._r = self._proc.stdout
        elif address is not None:
            self._sock = socket.create_connection(address)
            self._w = self._sock.makefile("wb")
            self._r = self._sock.makefile("rb")
        else:
            raise ConfigError("StreamPpgProvider needs a command or an address")
        self._responses: queue.Queue = queue.Queue()
        self._pending = 0
        self._lock = threading.Lock()
        self._handshake()

    def _handshake(self) -> None:
        self._w.write(f"{PROTOCOL_HELLO} {self.set_name}\n".encode())
        self._w.flush()
        line = self._r.readline().decode().strip()
        if line != f"{PROTOCOL_HELLO} {self.set_name}":
            self.close()
            raise FormatError(f"PPGSTREAM handshake failed: got {line!r}")
        threading.Thread(target=self._read_loop, daemon=True).start()

    def _read_loop(self) -> None:
        try:
            while True:
                header = self._r.readline()
                if not header:
                    break
                parts = header.decode().split()
                if len(parts) != 3 or parts[0] != "ROWS":
                    self._responses.put(FormatError(f"bad PPGSTREAM header {header!r}"))
                    return
                n_rows, n_dims = int(parts[1]), int(parts[2])
                payload = self._r.read(n_rows * n_dims * 4)
                if len(payload) != n_rows * n_dims * 4:
                    self._responses.put(ProviderStall("PPGSTREAM closed mid-response"))
                    return
                rows = np.frombuffer(payload, dtype="<f4").reshape(n_rows, n_dims)
                self._responses.put(rows.astype(np.float64))
        except Exception as exc:
            self._responses.put(exc)

    def start(self, expected_frames: Optional[int]) -> None:
        pass

    def feed(self, samples: np.ndarray) -> None:
        data = np.asarray(samples, dtype="<f4").tobytes()
        self._w.write(f"CHUNK {len(samples)}\n".encode())
        self._w.write(data)
        self._w.flush()
        with self._lock:
            self._pending += 1

    def flush(self) -> None:
        self._w.write(b"FLUSH\n")
        self._w.flush()
        with self._lock:
            self._pending += 1

    def poll(self, frame_end: int, deadline_s: float) -> np.ndarray:
        """Rows from answered requests, waiting at most deadline_s for laggards."""
        out = []
        deadline = time.monotonic() + deadline_s
        while True:
            with self._lock:
                pending = self._pending
            if pending == 0:
                break
            timeout = max(0.0, deadline - time.monotonic())
            try:
                item = self._responses.get(timeout=timeout)
            except queue.Empty:
                break
            if isinstance(item, Exception):
                raise item
            with self._lock:
                self._pending -= 1
            if item.shape[0] and item.shape[1] != self.dims:
                raise FormatError(
                    f"PPGSTREAM returned {item.shape[1]} dims, expected {self.dims}"
                )
            if item.shape[0]:
                out.append(item)
        return np.vstack(out) if out else np.zeros((0, self.dims))

    def close(self) -> None:
        try:
            self._w.close()
        except Exception:
            pass
        if self._proc is not None:
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        if self._sock is not None:
            self._sock.close()


def make_provider(spec: str, set_name: str):
    """Provider from a CLI-style spec: file:<path>, exec:<cmd>, tcp:host:port."""
    kind, _, rest = spec.partition(":")
    if kind == "file":
        return FilePpgProvider.from_file(rest, get_set(set_name))
    if kind == "exec":
        return StreamPpgProvider(set_name, command=rest)
    if kind == "tcp":
        host, _, port = rest.rpartition(":")
        return StreamPpgProvider(set_name, address=(host, int(port)))
    raise ConfigError(f"unknown provider spec {spec!r}")


# -- prepared artifacts ------------------------------------------------------------


@dataclass
class PreparedArtifacts:
    """Offline outputs the tracker consumes: path, timeline, tempo map."""

    score_ref_path: WarpingPath
    timeline: LyricsTimeline
    tempo_map: TempoMap
    ref_wav: Path

    @classmethod
    def load(cls, prepared_dir) -> "PreparedArtifacts":
        d = Path(prepared_dir)
        missing = [
            n
            for n in ("score_ref_path.csv", "timeline.json", "ref.wav")
            if not (d / n).exists()
        ]
        if missing:
            raise ConfigError(f"{d}: missing prepared artifacts {missing}")
        timeline = LyricsTimeline.load_json(d / "timeline.json")
        return cls(
            WarpingPath.load_csv(d / "score_ref_path.csv"),
            timeline,
            timeline.tempo_map,
            d / "ref.wav",
        )


class _UnitLocator:
    """ref-time cursor over the pseudo-labeled timeline."""

    def __init__(self, timeline: LyricsTimeline):
        self.notes = []
        for line in timeline.lines:
            for word in line.words:
                for note in word.notes:
                    if note.ref_time is None:
                        raise ConfigError("timeline has unfilled ref times; run prepare")
                    self.notes.append((note.ref_time, note, word, line))
        self.times = np.array([t for t, *_ in self.notes])

    def locate(self, ref_time: float):
        idx = int(np.searchsorted(self.times, ref_time + 1e-9, side="right")) - 1
        if idx < 0:
            return None
        return self.notes[idx]


@dataclass
class TrackRun:
    events: list = field(default_factory=list)
    chunk_seconds: list = field(default_factory=list)
    frames_tracked: int = 0
    stalled_frames: int = 0


def measure_latency(run: TrackRun) -> dict:
    """Per-chunk processing time distribution and real-time factors."""
    if not run.chunk_seconds:
        return {"chunks": 0}
    arr = np.array(run.chunk_seconds)
    budget = CHUNK_SAMPLES / 16000.0
    return {
        "chunks": int(arr.size),
        "p50_ms": float(np.percentile(arr, 50) * 1000),
        "p95_ms": float(np.percentile(arr, 95) * 1000),
        "max_ms": float(arr.max() * 1000),
        "rtf_p50": float(np.percentile(arr, 50) / budget),
        "rtf_p95": float(np.percentile(arr, 95) / budget),
        "rtf_max": float(arr.max() / budget),
        "stalled_frames": run.stalled_frames,
    }


@dataclass
class _PendingFrame:
    index: int
    front: np.ndarray
    enqueued: float


class Tracker:
    """Owns the aligner; consume chunks via process_chunk, then finish()."""

    def __init__(
        self,
        ref_features: FeatureMatrix,
        artifacts: PreparedArtifacts,
        combo: FeatureCombo,
        ppg_provider=None,
        oltw: OltwConfig = OltwConfig(),
        clock: FrameClock = DEFAULT_CLOCK,
        expected_frames: Optional[int] = None,
        ppg_deadline_s: float = PPG_DEADLINE_S,
        pipelines: Optional[dict] = None,
    ):
        self.combo = combo
        self.clock = clock
        self.provider = ppg_provider
        self.deadline_s = ppg_deadline_s
        set_name = combo.needs_ppg
        if set_name and ppg_provider is None:
            raise ConfigError(f"feature combo {combo.name!r} needs a PPG provider")
        if ppg_provider is not None:
            ppg_provider.start(expected_frames)
        self.state = OltwState(ref_features, oltw)
        self.ref_to_score = artifacts.score_ref_path.transposed()
        self.tempo_map = artifacts.tempo_map
        self.locator = _UnitLocator(artifacts.timeline)
        self.stft = StreamingStft()
        self.run = TrackRun()
        self._pipes = pipelines or {k: default_pipeline(k) for k in ("chroma", "mel", "mfcc", "ppg")}
        offset = 0
        self._ppg_slice = None
        for kind, arg in combo.parts:
            if kind == "chroma":
                width = 12
            elif kind == "mel":
                width = 66
            elif kind == "mfcc":
                width = int(arg)
            else:
                width = get_set(arg).size
                self._ppg_slice = slice(offset, offset + width)
            offset += width
        self._front_slice = slice(0, self._ppg_slice.start) if self._ppg_slice else None
        self._pending: deque[_PendingFrame] = deque()
        self._frames_extracted = 0
        self._ppg_received = 0  # absolute count of posterior rows seen
        self._ppg_store: dict[int, np.ndarray] = {}
        self._last_idx = {"line": -1, "word": -1, "note": -1}

    def _part_rows(self, spec_rows: np.ndarray) -> np.ndarray:
        """Pipelined non-PPG feature rows for new spectrogram frames."""
        parts = []
        for kind, arg in self.combo.parts:
            if kind == "chroma":
                parts.append(self._pipes["chroma"].apply_rows(chroma_rows(spec_rows)))
            elif kind == "mel":
                parts.append(self._pipes["mel"].apply_rows(mel_alignment_rows(spec_rows)))
            elif kind == "mfcc":
                parts.append(
                    self._pipes["mfcc"].apply_rows(mfcc_rows(mel_rows(spec_rows), int(arg)))
                )
        return np.hstack(parts)

    def _collect_ppg(self, deadline_s: float) -> None:
        rows = self.provider.poll(self._frames_extracted, deadline_s)
        for row in rows:
            idx = self._ppg_received
            self._ppg_received += 1
            if self._pending and idx >= self._pending[0].index:
                self._ppg_store[idx] = row
        # drop rows for frames already stepped in fallback mode
        if self._pending:
            floor = self._pending[0].index
            self._ppg_store = {k: v for k, v in self._ppg_store.items() if k >= floor}

    def _step_ready(self, events: list, now: float, final: bool) -> None:
        ppg_width = (
            self._ppg_slice.stop - self._ppg_slice.start if self._ppg_slice else 0
        )
        while self._pending:
            pf = self._pending[0]
            if self._ppg_slice is None:
                frame, active, fallback = pf.front, None, False
            elif pf.index in self._ppg_store:
                row = self._ppg_store.pop(pf.index)
                ppg_part = self._pipes["ppg"].apply_rows(row[None, :])[0]
                frame, active, fallback = np.concatenate([pf.front, ppg_part]), None, False
            elif final or (now - pf.enqueued) > self.deadline_s:
                self.run.stalled_frames += 1
                frame = np.concatenate([pf.front, np.zeros(ppg_width)])
                active, fallback = self._front_slice, True
            else:
                break  # pending posteriors still within their deadline
            self._pending.popleft()
            pos = self.state.step(frame, active=active)
            self.run.frames_tracked += 1
            self._emit(events, pf.enqueued, pf.index, pos, fallback)

    def _emit(self, events: list, arrival: float, b_frame: int, pos: float,
              fallback: bool) -> None:
        ref_time = self.clock.frames_to_seconds(max(pos, 0.0))
        hit = self.locator.locate(ref_time)
        if hit is None:
            return
        _, note, word, line = hit
        last_a = float(self.ref_to_score.pairs[-1, 0])
        score_frame = self.ref_to_score.map(min(pos, last_a))
        score_time = self.clock.frames_to_seconds(max(score_frame, 0.0))
        beat = self.tempo_map.beat_at_time(score_time)
        now = time.monotonic()
        for level, unit in (("line", line), ("word", word), ("note", note)):
            if unit.index > self._last_idx[level]:
                self._last_idx[level] = unit.index
                events.append(
                    LyricEvent(
                        wall_time=now,
                        target_time=self.clock.frames_to_seconds(b_frame),
                        ref_time=ref_time,
                        score_beat=beat,
                        unit_level=level,
                        unit_index=unit.index,
                        unit_text=unit.text,
                        latency=now - arrival,
                        ppg_fallback=fallback,
                    )
                )

    def process_chunk(self, chunk: AudioChunk, arrival: float) -> list:
        t0 = time.perf_counter()
        events: list[LyricEvent] = []
        spec_rows = self.stft.feed(chunk.samples)
        if self.provider is not None:
            self.provider.feed(chunk.samples)
        if spec_rows.shape[0]:
            front = self._part_rows(spec_rows)
            for i in range(spec_rows.shape[0]):
                self._pending.append(
                    _PendingFrame(self._frames_extracted + i, front[i], arrival)
                )
            self._frames_extracted += spec_rows.shape[0]
        if self.provider is not None and self._ppg_slice is not None:
            self._collect_ppg(self.deadline_s)
        self._step_ready(events, time.monotonic(), final=False)
        self.run.chunk_seconds.append(time.perf_counter() - t0)
        self.run.events.extend(events)
        return events

    def finish(self) -> list:
        events: list[LyricEvent] = []
        arrival = time.monotonic()
        spec_rows = self.stft.flush()
        if self.provider is not None:
            self.provider.flush()
        if spec_rows.shape[0]:
            front = self._part_rows(spec_rows)
            for i in range(spec_rows.shape[0]):
                self._pending.append(
                    _PendingFrame(self._frames_extracted + i, front[i], arrival)
                )
            self._frames_extracted += spec_rows.shape[0]
        if self.provider is not None and self._ppg_slice is not None:
            self._collect_ppg(max(self.deadline_s, 2.0))
        self._step_ready(events, time.monotonic(), final=True)
        if self.provider is not None:
            self.provider.close()
        self.run.events.extend(events)
        return events


def track(
    chunks: Iterable[tuple[AudioChunk, float]],
    ref_features: FeatureMatrix,
    artifacts: PreparedArtifacts,
    combo: FeatureCombo,
    ppg_provider=None,
    oltw: OltwConfig = OltwConfig(),
    expected_frames: Optional[int] = None,
):
    """Generator of LyricEvents over a stream of (chunk, arrival_time)."""
    tracker = Tracker(
        ref_features, artifacts, combo, ppg_provider, oltw,
        expected_frames=expected_frames,
    )
    for chunk, arrival in chunks:
        yield from tracker.process_chunk(chunk, arrival)
    yield from tracker.finish()


def paced_chunks(clip: AudioClip, pace: str = "fast"):
    """Producer thread + bounded queue yielding (chunk, arrival_time)."""
    if pace not in ("fast", "realtime"):
        raise ConfigError(f"pace must be fast or realtime, got {pace!r}")
    q: queue.Queue = queue.Queue(maxsize=QUEUE_CAPACITY)
    budget = CHUNK_SAMPLES / 16000.0

    def produce():
        start = time.monotonic()
        for i, chunk in enumerate(chunk_stream(clip)):
            if pace == "realtime":
                release = start + i * budget
                delay = release - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            q.put((chunk, time.monotonic()))
        q.put(None)

    threading.Thread(target=produce, daemon=True).start()
    while True:
        item = q.get()
        if item is None:
            return
        yield item


def track_file(
    target_wav,
    prepared_dir,
    feature_name: str = "chroma",
    ppg_spec: Optional[str] = None,
    ref_ppg_spec: Optional[str] = None,
    pace: str = "fast",
    oltw: OltwConfig = OltwConfig(),
    pipeline_overrides=(),
    stacked_metric: str = "euclidean",
) -> tuple[list, TrackRun]:
    """File-driven tracking run; returns (events, run statistics)."""
    artifacts = PreparedArtifacts.load(prepared_dir)
    combo = FeatureCombo.parse(feature_name)
    pipes = resolve_pipelines(pipeline_overrides)
    set_name = combo.needs_ppg
    ref_ppg_path = None
    if set_name:
        if ref_ppg_spec is None or not ref_ppg_spec.startswith("file:"):
            raise ConfigError("reference PPG must be a file:<path> spec")
        ref_ppg_path = ref_ppg_spec.partition(":")[2]
    ref_features = combo_features(
        combo, artifacts.ref_wav, ref_ppg_path,
        pipelines=pipes, stacked_metric=stacked_metric,
    )
    clip = load_wav(target_wav)
    expected = frame_count(len(clip.samples))
    provider = None
    if set_name:
        if ppg_spec is None:
            raise ConfigError(f"feature combo {feature_name!r} needs --ppg-provider")
        provider = make_provider(ppg_spec, set_name)
    tracker = Tracker(
        ref_features, artifacts, combo, provider, oltw,
        expected_frames=expected, pipelines=pipes,
    )
    events: list[LyricEvent] = []
    for chunk, arrival in paced_chunks(clip, pace):
        events.extend(tracker.process_chunk(chunk, arrival))
    events.extend(tracker.finish())
    return events, tracker.run
