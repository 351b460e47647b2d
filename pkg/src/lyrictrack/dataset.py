"""Synthetic benchmark dataset: short songs with known warps and posteriors.

Each generated song directory is a complete winterreise_rt-style entry:
score, sidecar lyrics, a deadpan "reference" rendered at score tempo, a
"target" re-synthesized under a piecewise tempo curve with added noise, exact
note annotations for both, and file-based posteriorgram fixtures derived from
the known note spans.  Melodies deliberately include repeated pitches and
inter-phrase rests, the cases where chroma alone is ambiguous and phonetic
features help.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import save_wav, synth_score_audio, AudioClip
from .evaluate import OnsetAnnotation
from .features import frame_count
from .ppg import get_set, save_ppg, synthetic_ppg
from .score import AccompNote, VocalNote, build_timeline
from .timemap import DEFAULT_CLOCK, TempoMap

_WORDS = [
    ("win", "ter"), ("nacht",), ("frem", "d"), ("lin", "den"), ("baum",),
    ("trau", "me"), ("still,",), ("mor", "gen"), ("weg",), ("schnee",),
    ("kal", "te"), ("wind",), ("herz",), ("lie", "be"), ("gu", "te"),
]

_STEP_NAMES = {0: ("C", 0), 1: ("C", 1), 2: ("D", 0), 3: ("E", -1), 4: ("E", 0),
               5: ("F", 0), 6: ("F", 1), 7: ("G", 0), 8: ("A", -1), 9: ("A", 0),
               10: ("B", -1), 11: ("B", 0)}


def _midi_to_xml_pitch(midi: int) -> str:
    octave = midi // 12 - 1
    step, alter = _STEP_NAMES[midi % 12]
    alter_el = f"<alter>{alter}</alter>" if alter else ""
    return f"<pitch><step>{step}</step>{alter_el}<octave>{octave}</octave></pitch>"


@dataclass
class SyntheticSong:
    vocal: list
    accomp: list
    bpm: float
    lyrics_text: str

    def score_xml(self, divisions: int = 4) -> str:
        def note_el(onset, duration, pitch, lyric=None, syllabic=None):
            body = _midi_to_xml_pitch(pitch)
            body += f"<duration>{int(round(duration * divisions))}</duration>"
            if lyric is not None:
                body += (
                    f'<lyric number="1"><syllabic>{syllabic}</syllabic>'
                    f"<text>{lyric}</text></lyric>"
                )
            return "<note>" + body + "</note>"

        def rest_el(duration):
            return f"<rest/><duration>{int(round(duration * divisions))}</duration>"

        def part_body(events):
            # one sprawling measure; the parser does not require barline math
            out = [
                f"<measure number=\"1\"><attributes><divisions>{divisions}</divisions>"
                f"</attributes><direction><sound tempo=\"{self.bpm}\"/></direction>"
            ]
            cursor = 0.0
            for ev in events:
                if ev.onset > cursor + 1e-9:
                    out.append("<note>" + rest_el(ev.onset - cursor) + "</note>")
                    cursor = ev.onset
                if isinstance(ev, VocalNote):
                    syllabic = {"start": "begin"}.get(ev.syllabic, ev.syllabic)
                    lyric = ev.syllable if ev.syllable else None
                    out.append(
                        note_el(ev.onset, ev.duration, ev.pitch, lyric,
                                syllabic if lyric else None)
                    )
                else:
                    out.append(note_el(ev.onset, ev.duration, ev.pitch))
                cursor = ev.onset + ev.duration
            out.append("</measure>")
            return "".join(out)

        xml = (
            '<?xml version="1.0"?><score-partwise version="3.1"><part-list>'
            '<score-part id="P1"><part-name>Voice</part-name></score-part>'
            '<score-part id="P2"><part-name>Piano</part-name></score-part>'
            "</part-list>"
            f'<part id="P1">{part_body(self.vocal)}</part>'
            f'<part id="P2">{part_body(self.accomp)}</part>'
            "</score-partwise>"
        )
        return xml


def make_song(rng: np.random.Generator, n_phrases: int = 5) -> SyntheticSong:
    """Random phrase-structured melody with rests, repeats, and accompaniment."""
    bpm = float(rng.integers(96, 144))
    vocal: list[VocalNote] = []
    accomp: list[AccompNote] = []
    lyric_lines: list[list[str]] = []
    beat = float(rng.integers(1, 3))  # leading rest
    pitch = int(rng.integers(57, 67))
    word_pool = rng.permutation(len(_WORDS))
    wi = 0
    for _ in range(n_phrases):
        phrase_start = beat
        line_words = []
        n_words = int(rng.integers(2, 5))
        for _ in range(n_words):
            sylls = _WORDS[word_pool[wi % len(_WORDS)]]
            wi += 1
            line_words.append("".join(sylls))
            for si, syl in enumerate(sylls):
                # 35% repeated pitch: deliberately chroma-ambiguous
                if rng.random() >= 0.35:
                    pitch = int(np.clip(pitch + rng.integers(-4, 5), 52, 76))
                dur = float(rng.choice([0.5, 1.0, 1.0, 1.5, 2.0]))
                if len(sylls) == 1:
                    syllabic = "single"
                elif si == 0:
                    syllabic = "start"
                elif si == len(sylls) - 1:
                    syllabic = "end"
                else:
                    syllabic = "middle"
                vocal.append(VocalNote(beat, dur, pitch, syl, syllabic))
                beat += dur
        lyric_lines.append(line_words)
        # accompaniment: low drone through the phrase and the following rest
        rest = float(rng.choice([1.0, 1.5, 2.0]))
        root = vocal[-1].pitch - 12
        accomp.append(AccompNote(phrase_start, beat + rest - phrase_start, int(np.clip(root, 36, 60))))
        beat += rest
    lyrics_text = "\n".join(" ".join(ws) for ws in lyric_lines) + "\n"
    return SyntheticSong(vocal, accomp, bpm, lyrics_text)


def warped_tempo_map(
    song: SyntheticSong, rng: np.random.Generator, lo: float = 0.8, hi: float = 1.25
) -> TempoMap:
    """Piecewise tempo curve: segments of a few beats at ratios in [lo, hi]."""
    end_beat = song.vocal[-1].onset + song.vocal[-1].duration
    changes = []
    b = 0.0
    while b < end_beat:
        ratio = float(rng.uniform(lo, hi))
        changes.append((b, song.bpm * ratio))
        b += float(rng.integers(4, 9))
    return TempoMap.from_changes(changes)


def _syllable_onset_class(syllable: str) -> str:
    head = syllable[:1].lower()
    if head in "mn":
        return "nasal"
    if head in "fshvwz":
        return "fricative"
    if head in "pbtdkgqc":
        return "stop"
    return "vowel"


def frame_labels(
    vocal, tm: TempoMap, n_frames: int, clock=DEFAULT_CLOCK, onset_frames: int = 2
) -> list[str]:
    """Per-frame phoneme5 labels from note spans under a tempo map."""
    labels = ["silence"] * n_frames
    for note in vocal:
        t0 = tm.time_at_beat(note.onset)
        t1 = tm.time_at_beat(note.onset + note.duration)
        f0 = int(round(t0 * clock.frame_rate))
        f1 = min(int(round(t1 * clock.frame_rate)), n_frames)
        onset_cls = _syllable_onset_class(note.syllable) if note.syllable else "vowel"
        for f in range(f0, f1):
            if f < 0 or f >= n_frames:
                continue
            if onset_cls != "vowel" and f < f0 + onset_frames:
                labels[f] = onset_cls
            else:
                labels[f] = "vowel"
    return labels


def annotation_from_timeline(timeline, tm: TempoMap) -> OnsetAnnotation:
    notes = list(timeline.iter_notes())
    times, pitches, sylls, words, lines = [], [], [], [], []
    for line in timeline.lines:
        for word in line.words:
            for note in word.notes:
                times.append(tm.time_at_beat(note.beat))
                pitches.append(note.pitch)
                sylls.append(note.text)
                words.append(word.index)
                lines.append(line.index)
    return OnsetAnnotation(
        np.array(times), np.array(pitches), tuple(sylls), np.array(words), np.array(lines)
    )


def add_noise(clip: AudioClip, rng: np.random.Generator, snr_db: float = 20.0) -> AudioClip:
    """White noise at the given SNR below the signal RMS."""
    signal_rms = float(np.sqrt(np.mean(clip.samples**2)))
    noise = rng.normal(0.0, signal_rms * 10 ** (-snr_db / 20.0), len(clip.samples))
    mixed = clip.samples + noise
    peak = np.max(np.abs(mixed))
    if peak > 1.0:
        mixed = mixed / peak
    return AudioClip(mixed, clip.sample_rate)


def build_synthetic_dataset(
    root,
    n_songs: int = 8,
    seed: int = 2024,
    snr_db: float = 20.0,
    ppg_confidence: float = 0.8,
    tempo_range: tuple[float, float] = (0.8, 1.25),
    n_phrases: int = 5,
) -> list[Path]:
    """Write a complete n-song benchmark dataset; returns the song dirs."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    pset = get_set("phoneme5")
    dirs = []
    for i in range(n_songs):
        song_dir = root / f"song{i:02d}"
        song_dir.mkdir(exist_ok=True)
        song = make_song(rng, n_phrases)
        score_tm = TempoMap.constant(song.bpm)
        target_tm = warped_tempo_map(song, rng, *tempo_range)

        (song_dir / "score.musicxml").write_text(song.score_xml(), encoding="utf-8")
        (song_dir / "lyrics.txt").write_text(song.lyrics_text, encoding="utf-8")

        ref_clip = synth_score_audio(song.vocal, score_tm, song.accomp)
        target_clean = synth_score_audio(song.vocal, target_tm, song.accomp)
        target_clip = add_noise(target_clean, rng, snr_db)
        save_wav(song_dir / "ref.wav", ref_clip)
        save_wav(song_dir / "target.wav", target_clip)

        timeline = build_timeline(song.vocal, score_tm, song.lyrics_text)
        annotation_from_timeline(timeline, score_tm).save_csv(song_dir / "ann_ref.csv")
        annotation_from_timeline(timeline, target_tm).save_csv(song_dir / "ann_target.csv")

        for role, clip, tm in (("ref", ref_clip, score_tm), ("target", target_clip, target_tm)):
            n = frame_count(len(clip.samples))
            labels = frame_labels(song.vocal, tm, n)
            save_ppg(song_dir / f"ppg_{role}.fmx", synthetic_ppg(labels, pset, ppg_confidence))
        dirs.append(song_dir)
    return dirs
