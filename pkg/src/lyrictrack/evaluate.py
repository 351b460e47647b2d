"""Alignment metrics (AAE/MAE/Std/PCO), onset mapping, and the benchmark
harness over a winterreise_rt-style dataset layout.

Dataset layout, one directory per song under the root:
    score.musicxml  lyrics.txt  ref.wav  target.wav
    ann_ref.csv     ann_target.csv  [ppg_ref.fmx  ppg_target.fmx]
Annotation CSV header: time_sec,pitch,syllable,word_index,line_index.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .audio import load_wav, synth_score_audio
from .errors import ClockMismatch, ConfigError, DatasetLayoutError, LengthMismatch
from .features import (
    FeatureMatrix,
    FeaturePipeline,
    apply_pipeline,
    chroma,
    default_pipeline,
    log_mel,
    mel_alignment,
    mfcc,
    stack,
    stft,
)
from .offline import dlnco, mrms_dtw, offline_cost, generate_pseudo_labels
from .online import OltwConfig, oltw_run
from .ppg import get_set, load_ppg
from .score import build_timeline, parse_musicxml
from .timemap import DEFAULT_CLOCK, FrameClock, WarpingPath

PCO_THRESHOLDS = (0.2, 0.3, 0.5, 1.0)

SONG_FILES = (
    "score.musicxml",
    "lyrics.txt",
    "ref.wav",
    "target.wav",
    "ann_ref.csv",
    "ann_target.csv",
)


@dataclass(frozen=True)
class OnsetAnnotation:
    times: np.ndarray  # seconds, strictly increasing
    pitches: np.ndarray
    syllables: tuple[str, ...]
    word_index: np.ndarray
    line_index: np.ndarray

    def __post_init__(self):
        if len(self.times) == 0:
            raise DatasetLayoutError("annotation has no onsets")
        if np.any(np.diff(self.times) <= 0):
            raise DatasetLayoutError("annotation times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def word_onset_mask(self) -> np.ndarray:
        """True at the first note of each word."""
        w = self.word_index
        mask = np.ones(len(w), dtype=bool)
        mask[1:] = w[1:] != w[:-1]
        return mask

    def save_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_sec", "pitch", "syllable", "word_index", "line_index"])
            for i in range(len(self.times)):
                writer.writerow(
                    [
                        repr(float(self.times[i])),
                        int(self.pitches[i]),
                        self.syllables[i],
                        int(self.word_index[i]),
                        int(self.line_index[i]),
                    ]
                )

    @classmethod
    def load_csv(cls, path) -> "OnsetAnnotation":
        times, pitches, syllables, words, lines = [], [], [], [], []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["time_sec", "pitch", "syllable", "word_index", "line_index"]:
                raise DatasetLayoutError(f"{path}: bad annotation header {header!r}")
            for row in reader:
                times.append(float(row[0]))
                pitches.append(int(row[1]))
                syllables.append(row[2])
                words.append(int(row[3]))
                lines.append(int(row[4]))
        return cls(
            np.array(times),
            np.array(pitches),
            tuple(syllables),
            np.array(words),
            np.array(lines),
        )


def estimate_onsets(
    path: WarpingPath,
    ref_onsets: OnsetAnnotation,
    clock: FrameClock = DEFAULT_CLOCK,
) -> np.ndarray:
    """Map annotated onset times through the path's a axis to the b axis."""
    frames = np.array([clock.seconds_to_frames(t) for t in ref_onsets.times])
    last_a = float(path.pairs[-1, 0])
    mapped = path.map_many(np.minimum(frames, last_a))
    return mapped / clock.frame_rate


def aae_mae_std(est, gt) -> tuple[float, float, float]:
    """Mean, median, and population std of |est - gt| in milliseconds."""
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape or est.size == 0:
        raise LengthMismatch(f"est {est.shape} vs gt {gt.shape}")
    err = np.abs(est - gt) * 1000.0
    return float(err.mean()), float(np.median(err)), float(err.std())


def pco(est, gt, theta: float) -> float:
    """Percentage of onsets with |est - gt| strictly below theta seconds."""
    est = np.asarray(est, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if est.shape != gt.shape or est.size == 0:
        raise LengthMismatch(f"est {est.shape} vs gt {gt.shape}")
    return 100.0 * float(np.count_nonzero(np.abs(est - gt) < theta)) / est.size


# -- feature combinations ------------------------------------------------------


@dataclass(frozen=True)
class FeatureCombo:
    """Parsed Table-style feature name, e.g. chroma, mel, chroma+ppg:phoneme5."""

    name: str
    parts: tuple[tuple[str, Optional[str]], ...]  # (kind, arg)

    @classmethod
    def parse(cls, name: str) -> "FeatureCombo":
        parts = []
        for token in name.split("+"):
            token = token.strip()
            kind, _, arg = token.partition(":")
            kind = kind.strip().lower()
            if kind not in ("chroma", "mel", "mfcc", "ppg"):
                raise ConfigError(f"unknown feature {token!r} in {name!r}")
            if kind == "mfcc":
                if arg not in ("13", "5"):
                    raise ConfigError(f"mfcc wants :13 or :5, got {token!r}")
                parts.append(("mfcc", arg))
            elif kind == "ppg":
                get_set(arg or "")  # validates
                parts.append(("ppg", arg))
            else:
                if arg:
                    raise ConfigError(f"{kind} takes no argument, got {token!r}")
                parts.append((kind, None))
        if not parts:
            raise ConfigError(f"empty feature combination {name!r}")
        return cls(name, tuple(parts))

    @property
    def needs_ppg(self) -> Optional[str]:
        for kind, arg in self.parts:
            if kind == "ppg":
                return arg
        return None


def parse_pipeline_spec(text: str) -> tuple[str, FeaturePipeline]:
    """Parse a grid-search override like ``chroma=linf,none,euclidean`` or
    ``ppg=none,softmax+log1p,cosine`` into (kind, pipeline)."""
    kind, eq, rest = text.partition("=")
    kind = kind.strip().lower()
    fields = [f.strip() for f in rest.split(",")]
    if not eq or len(fields) != 3:
        raise ConfigError(
            f"pipeline override {text!r} is not kind=norm,scales,distance"
        )
    if kind not in ("chroma", "mel", "mfcc", "ppg"):
        raise ConfigError(f"unknown pipeline kind {kind!r} in {text!r}")
    norm, scales, distance = fields
    scale = tuple(s for s in scales.split("+") if s and s != "none")
    return kind, FeaturePipeline(kind, norm, scale, distance)


def resolve_pipelines(overrides=None) -> dict[str, FeaturePipeline]:
    pipes = {k: default_pipeline(k) for k in ("chroma", "mel", "mfcc", "ppg")}
    for item in overrides or ():
        kind, pipe = parse_pipeline_spec(item) if isinstance(item, str) else item
        if kind not in pipes:
            raise ConfigError(f"unknown pipeline kind {kind!r}")
        pipes[kind] = pipe
    return pipes


def combo_features(
    combo: FeatureCombo,
    wav_path,
    ppg_path=None,
    clock: FrameClock = DEFAULT_CLOCK,
    pipelines: Optional[dict] = None,
    stacked_metric: str = "euclidean",
) -> FeatureMatrix:
    """Extract, pipeline, and stack the features a combo names for one file."""
    pipes = pipelines or resolve_pipelines()
    clip = load_wav(wav_path)
    spec = stft(clip)
    n = spec.shape[0]
    processed = []
    for kind, arg in combo.parts:
        if kind == "chroma":
            processed.append(apply_pipeline(chroma(spec, clock), pipes["chroma"]))
        elif kind == "mel":
            processed.append(apply_pipeline(mel_alignment(spec, clock), pipes["mel"]))
        elif kind == "mfcc":
            processed.append(
                apply_pipeline(mfcc(log_mel(spec, clock), int(arg)), pipes["mfcc"])
            )
        elif kind == "ppg":
            if ppg_path is None:
                raise ConfigError(f"combo {combo.name!r} needs a PPG file")
            ppg = load_ppg(ppg_path, get_set(arg), clock)
            if ppg.n_frames != n:
                raise ClockMismatch(
                    f"{ppg_path}: {ppg.n_frames} PPG frames != {n} audio frames"
                )
            processed.append(apply_pipeline(ppg.as_features(), pipes["ppg"]))
    return stack(processed, metric=stacked_metric)


# -- benchmark harness -----------------------------------------------------------


@dataclass
class PhaseMetrics:
    aae_ms: float
    mae_ms: float
    std_ms: float
    pco: dict[float, float]

    def to_json_obj(self):
        return {
            "aae_ms": self.aae_ms,
            "mae_ms": self.mae_ms,
            "std_ms": self.std_ms,
            "pco": {f"{int(th * 1000)}ms": v for th, v in self.pco.items()},
        }


def compute_metrics(est, gt, pco_mask=None) -> PhaseMetrics:
    aae, mae, std = aae_mae_std(est, gt)
    if pco_mask is not None:
        est_p, gt_p = np.asarray(est)[pco_mask], np.asarray(gt)[pco_mask]
    else:
        est_p, gt_p = est, gt
    return PhaseMetrics(
        aae, mae, std, {th: pco(est_p, gt_p, th) for th in PCO_THRESHOLDS}
    )


def average_metrics(per_song: Sequence[PhaseMetrics]) -> PhaseMetrics:
    return PhaseMetrics(
        float(np.mean([m.aae_ms for m in per_song])),
        float(np.mean([m.mae_ms for m in per_song])),
        float(np.mean([m.std_ms for m in per_song])),
        {
            th: float(np.mean([m.pco[th] for m in per_song]))
            for th in PCO_THRESHOLDS
        },
    )


@dataclass
class EvalReport:
    rows: list  # (phase, feature_name, song_id or "average", PhaseMetrics)
    pco_level: str
    songs: list

    def averages(self) -> dict:
        return {
            (phase, feat): m
            for phase, feat, song, m in self.rows
            if song == "average"
        }

    def to_json_obj(self):
        return {
            "pco_level": self.pco_level,
            "songs": self.songs,
            "rows": [
                {
                    "phase": phase,
                    "feature": feat,
                    "song": song,
                    "metrics": m.to_json_obj(),
                }
                for phase, feat, song, m in self.rows
            ],
        }

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)

    def save_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["phase", "feature", "song", "aae_ms", "mae_ms", "std_ms"]
                + [f"pco_{int(th * 1000)}ms" for th in PCO_THRESHOLDS]
            )
            for phase, feat, song, m in self.rows:
                writer.writerow(
                    [phase, feat, song, f"{m.aae_ms:.1f}", f"{m.mae_ms:.1f}", f"{m.std_ms:.1f}"]
                    + [f"{m.pco[th]:.2f}" for th in PCO_THRESHOLDS]
                )

    def to_table(self) -> str:
        """Aligned text table of the per-phase averages."""
        header = (
            f"{'Phase':<8} {'Feature Type':<22} {'AAE (ms)':>9} {'MAE (ms)':>9} "
            f"{'Std (ms)':>9}"
            + "".join(f" {'<' + str(int(th * 1000)) + 'ms':>9}" for th in PCO_THRESHOLDS)
        )
        lines = [header, "-" * len(header)]
        for phase, feat, song, m in self.rows:
            if song != "average":
                continue
            lines.append(
                f"{phase:<8} {feat:<22} {m.aae_ms:>9.0f} {m.mae_ms:>9.0f} {m.std_ms:>9.0f}"
                + "".join(f" {m.pco[th]:>9.2f}" for th in PCO_THRESHOLDS)
            )
        lines.append("")
        lines.append(f"(PCO at {self.pco_level} level; averaged over {len(self.songs)} songs)")
        return "\n".join(lines)


def check_dataset_layout(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetLayoutError(f"{root} is not a directory")
    songs = sorted(p for p in root.iterdir() if p.is_dir())
    if not songs:
        raise DatasetLayoutError(f"{root}: no song directories")
    missing = []
    for song in songs:
        for name in SONG_FILES:
            if not (song / name).exists():
                missing.append(str(song / name))
    if missing:
        raise DatasetLayoutError("missing files: " + ", ".join(missing))
    return songs


def _song_offline(song: Path, clock: FrameClock):
    vocal, accomp, tm = parse_musicxml(song / "score.musicxml")
    lyrics = (song / "lyrics.txt").read_text(encoding="utf-8")
    timeline = build_timeline(vocal, tm, lyrics)
    score_clip = synth_score_audio(vocal, tm, accomp)
    ref_clip = load_wav(song / "ref.wav")
    score_ch = chroma(stft(score_clip), clock)
    ref_ch = chroma(stft(ref_clip), clock)
    score_stack, ref_stack, model = offline_cost(
        ref_ch, score_ch, dlnco(ref_ch), dlnco(score_ch)
    )
    path = mrms_dtw(score_stack, ref_stack, model)
    generate_pseudo_labels(timeline, path, clock)
    return timeline, path


def evaluate_song(
    song_dir,
    feature_names: Sequence[str],
    phases: Sequence[str] = ("offline", "online"),
    pco_level: str = "word",
    oltw: OltwConfig = OltwConfig(),
    clock: FrameClock = DEFAULT_CLOCK,
    keep_paths: bool = False,
    pipeline_overrides: Sequence[str] = (),
    stacked_metric: str = "euclidean",
):
    """Run the offline and/or online phases for one song directory.

    Returns {"song", "offline": PhaseMetrics?, "online": {feature: PhaseMetrics},
    "paths": optional figure payloads}.
    """
    song = Path(song_dir)
    ann_ref = OnsetAnnotation.load_csv(song / "ann_ref.csv")
    ann_target = OnsetAnnotation.load_csv(song / "ann_target.csv")
    out = {"song": song.name, "online": {}, "paths": {}}
    mask = ann_ref.word_onset_mask() if pco_level == "word" else None

    if "offline" in phases:
        timeline, path = _song_offline(song, clock)
        notes = list(timeline.iter_notes())
        if len(notes) != len(ann_ref):
            raise DatasetLayoutError(
                f"{song.name}: {len(notes)} score notes != {len(ann_ref)} ref onsets"
            )
        score_times = np.array([n.score_time for n in notes])
        score_ann = OnsetAnnotation(
            score_times,
            ann_ref.pitches,
            ann_ref.syllables,
            ann_ref.word_index,
            ann_ref.line_index,
        )
        est_ref = estimate_onsets(path, score_ann, clock)
        out["offline"] = compute_metrics(est_ref, ann_ref.times, mask)
        if keep_paths:
            out["paths"]["offline"] = (
                path.pairs,
                np.column_stack([score_times, ann_ref.times]) * clock.frame_rate,
            )

    if "online" in phases:
        pipes = resolve_pipelines(pipeline_overrides)
        for name in feature_names:
            combo = FeatureCombo.parse(name)
            set_name = combo.needs_ppg
            ref_feats = combo_features(
                combo,
                song / "ref.wav",
                song / "ppg_ref.fmx" if set_name else None,
                clock,
                pipelines=pipes,
                stacked_metric=stacked_metric,
            )
            target_feats = combo_features(
                combo,
                song / "target.wav",
                song / "ppg_target.fmx" if set_name else None,
                clock,
                pipelines=pipes,
                stacked_metric=stacked_metric,
            )
            path = oltw_run(ref_feats, target_feats, oltw)
            est_target = estimate_onsets(path, ann_ref, clock)
            out["online"][name] = compute_metrics(est_target, ann_target.times, mask)
            if keep_paths:
                out["paths"][f"online:{name}"] = (
                    path.pairs,
                    np.column_stack([ann_ref.times, ann_target.times]) * clock.frame_rate,
                )
    return out


def run_benchmark(
    dataset_root,
    feature_names: Sequence[str] = ("chroma",),
    phases: Sequence[str] = ("offline", "online"),
    pco_level: str = "word",
    oltw: OltwConfig = OltwConfig(),
    jobs: int = 1,
    keep_paths: bool = False,
    pipeline_overrides: Sequence[str] = (),
    stacked_metric: str = "euclidean",
) -> tuple[EvalReport, list]:
    """Evaluate every song, averaging metrics unweighted across songs.

    Returns (report, per_song_results); song order is sorted by id regardless
    of worker scheduling.
    """
    songs = check_dataset_layout(dataset_root)
    if pco_level not in ("word", "note"):
        raise ConfigError(f"pco_level must be word or note, got {pco_level!r}")
    for name in feature_names:
        combo = FeatureCombo.parse(name)
        if combo.needs_ppg:
            missing = [
                str(s / f)
                for s in songs
                for f in ("ppg_ref.fmx", "ppg_target.fmx")
                if not (s / f).exists()
            ]
            if missing:
                raise DatasetLayoutError("missing files: " + ", ".join(missing))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(
                    evaluate_song, str(s), tuple(feature_names), tuple(phases),
                    pco_level, oltw, DEFAULT_CLOCK, keep_paths,
                    tuple(pipeline_overrides), stacked_metric,
                )
                for s in songs
            ]
            results = [f.result() for f in futures]
    else:
        results = [
            evaluate_song(
                s, feature_names, phases, pco_level, oltw, keep_paths=keep_paths,
                pipeline_overrides=pipeline_overrides, stacked_metric=stacked_metric,
            )
            for s in songs
        ]
    results.sort(key=lambda r: r["song"])

    rows = []
    if "offline" in phases:
        per = [r["offline"] for r in results]
        rows.extend(
            ("offline", "chroma&dlnco", r["song"], r["offline"]) for r in results
        )
        rows.append(("offline", "chroma&dlnco", "average", average_metrics(per)))
    if "online" in phases:
        for name in feature_names:
            per = [r["online"][name] for r in results]
            rows.extend(("online", name, r["song"], r["online"][name]) for r in results)
            rows.append(("online", name, "average", average_metrics(per)))
    report = EvalReport(rows, pco_level, [r["song"] for r in results])
    return report, results
