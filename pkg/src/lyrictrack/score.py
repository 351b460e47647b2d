"""MusicXML parsing and the line/word/note lyrics timeline.

Supported MusicXML subset: partwise documents, divisions, notes with
pitch/duration/rest, ties, chords, lyric elements carrying syllabic + text,
sound tempo, and time signatures.  Repeats raise UnsupportedConstruct rather
than being silently unrolled.  A beat is one quarter note throughout.
"""
from __future__ import annotations

import json
import warnings
import zipfile
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    LineMatchError,
    NoVocalPart,
    UnsupportedConstruct,
    WordAssemblyError,
    XmlError,
)
from .timemap import TempoMap

_STEP_OFFSETS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_SYLLABIC_ALIASES = {"begin": "start", "end": "end", "middle": "middle", "single": "single"}


@dataclass(frozen=True)
class VocalNote:
    onset: float  # beats
    duration: float  # beats
    pitch: int  # MIDI
    syllable: str
    syllabic: str  # start | middle | end | single

    def __post_init__(self):
        if self.duration <= 0:
            raise XmlError(f"note at beat {self.onset}: non-positive duration")
        if self.onset < 0:
            raise XmlError(f"negative onset {self.onset}")
        if self.syllabic not in ("start", "middle", "end", "single"):
            raise XmlError(f"bad syllabic {self.syllabic!r}")
        if not self.syllable and self.syllabic != "middle":
            raise XmlError(f"note at beat {self.onset}: empty syllable")


@dataclass(frozen=True)
class AccompNote:
    onset: float
    duration: float
    pitch: int


@dataclass
class TimelineUnit:
    """One line, word, or note with its position anchors.

    ``ref_time`` stays None until the offline phase fills it in.
    """

    index: int
    text: str
    beat: float
    score_time: float
    ref_time: Optional[float] = None


@dataclass
class NoteUnit(TimelineUnit):
    pitch: int = 0
    duration_beats: float = 0.0
    syllabic: str = "single"


@dataclass
class WordUnit(TimelineUnit):
    notes: list = field(default_factory=list)


@dataclass
class LineUnit(TimelineUnit):
    words: list = field(default_factory=list)


@dataclass
class LyricsTimeline:
    lines: list
    tempo_map: TempoMap

    def iter_words(self):
        for line in self.lines:
            yield from line.words

    def iter_notes(self):
        for line in self.lines:
            for word in line.words:
                yield from word.notes

    def validate(self):
        for units in (list(self.lines), list(self.iter_words()), list(self.iter_notes())):
            onsets = [u.beat for u in units]
            if any(b > a for a, b in zip(onsets[1:], onsets[:-1])):
                raise XmlError("timeline units out of order")
        for word in self.iter_words():
            joined = "".join(n.text for n in word.notes)
            if joined != word.text:
                raise XmlError(f"word {word.text!r} != syllables {joined!r}")

    # -- JSON serialization (schema documented in the README) --

    def to_json_obj(self):
        return {
            "tempo_map": self.tempo_map.to_json_obj(),
            "lines": [
                {
                    "index": ln.index,
                    "text": ln.text,
                    "beat": ln.beat,
                    "score_time": ln.score_time,
                    "ref_time": ln.ref_time,
                    "words": [
                        {
                            "index": w.index,
                            "text": w.text,
                            "beat": w.beat,
                            "score_time": w.score_time,
                            "ref_time": w.ref_time,
                            "notes": [
                                {
                                    "index": n.index,
                                    "text": n.text,
                                    "beat": n.beat,
                                    "score_time": n.score_time,
                                    "ref_time": n.ref_time,
                                    "pitch": n.pitch,
                                    "duration_beats": n.duration_beats,
                                    "syllabic": n.syllabic,
                                }
                                for n in w.notes
                            ],
                        }
                        for w in ln.words
                    ],
                }
                for ln in self.lines
            ],
        }

    def save_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, ensure_ascii=False, indent=1)

    @classmethod
    def from_json_obj(cls, obj) -> "LyricsTimeline":
        lines = []
        for lo in obj["lines"]:
            words = []
            for wo in lo["words"]:
                notes = [
                    NoteUnit(
                        index=no["index"],
                        text=no["text"],
                        beat=no["beat"],
                        score_time=no["score_time"],
                        ref_time=no["ref_time"],
                        pitch=no["pitch"],
                        duration_beats=no["duration_beats"],
                        syllabic=no["syllabic"],
                    )
                    for no in wo["notes"]
                ]
                words.append(
                    WordUnit(
                        index=wo["index"],
                        text=wo["text"],
                        beat=wo["beat"],
                        score_time=wo["score_time"],
                        ref_time=wo["ref_time"],
                        notes=notes,
                    )
                )
            lines.append(
                LineUnit(
                    index=lo["index"],
                    text=lo["text"],
                    beat=lo["beat"],
                    score_time=lo["score_time"],
                    ref_time=lo["ref_time"],
                    words=words,
                )
            )
        return cls(lines, TempoMap.from_json_obj(obj["tempo_map"]))

    @classmethod
    def load_json(cls, path) -> "LyricsTimeline":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


# -- MusicXML parsing -------------------------------------------------------------


def _read_xml_root(path) -> ET.Element:
    path = str(path)
    try:
        if path.endswith(".mxl"):
            with zipfile.ZipFile(path) as zf:
                names = [
                    n
                    for n in zf.namelist()
                    if n.endswith(".xml") or n.endswith(".musicxml")
                ]
                names = [n for n in names if not n.startswith("META-INF")]
                if not names:
                    raise XmlError(f"{path}: no score document inside container")
                with zf.open(names[0]) as fh:
                    return ET.parse(fh).getroot()
        return ET.parse(path).getroot()
    except (ET.ParseError, zipfile.BadZipFile, OSError) as exc:
        raise XmlError(f"{path}: {exc}") from exc


def _pitch_to_midi(pitch_el, location) -> int:
    step = pitch_el.findtext("step")
    if step not in _STEP_OFFSETS:
        raise XmlError(f"bad pitch step {step!r} (at {location})")
    alter = int(float(pitch_el.findtext("alter", "0")))
    octave = int(pitch_el.findtext("octave"))
    return (octave + 1) * 12 + _STEP_OFFSETS[step] + alter


@dataclass
class _RawNote:
    onset: float
    duration: float
    pitch: int
    lyric_text: Optional[str]
    lyric_syllabic: Optional[str]
    tie_start: bool
    tie_stop: bool


def _parse_part(part, part_id) -> tuple[list[_RawNote], list[tuple[float, float]]]:
    """Walk one part, returning raw notes (beats) and (beat, bpm) tempo marks."""
    divisions = 1
    cursor = 0.0  # beats
    notes: list[_RawNote] = []
    tempos: list[tuple[float, float]] = []
    verse_warned = False
    for mi, measure in enumerate(part.findall("measure")):
        location = f"part {part_id}, measure {measure.get('number', mi + 1)}"
        if measure.find(".//repeat") is not None:
            raise UnsupportedConstruct("repeat barlines are not supported", location)
        for el in measure:
            if el.tag == "attributes":
                div = el.findtext("divisions")
                if div:
                    divisions = int(div)
            elif el.tag == "sound" and el.get("tempo"):
                tempos.append((cursor, float(el.get("tempo"))))
            elif el.tag == "direction":
                snd = el.find("sound")
                if snd is not None and snd.get("tempo"):
                    tempos.append((cursor, float(snd.get("tempo"))))
            elif el.tag == "backup":
                cursor -= int(el.findtext("duration")) / divisions
            elif el.tag == "forward":
                cursor += int(el.findtext("duration")) / divisions
            elif el.tag == "note":
                dur_el = el.findtext("duration")
                if dur_el is None:
                    if el.find("grace") is not None:
                        continue  # grace notes carry no duration; skip
                    raise UnsupportedConstruct("note without duration", location)
                dur = int(dur_el) / divisions
                is_chord = el.find("chord") is not None
                onset = cursor if not is_chord else cursor - dur
                if el.find("rest") is not None:
                    if not is_chord:
                        cursor += dur
                    continue
                pitch_el = el.find("pitch")
                if pitch_el is None:
                    raise UnsupportedConstruct("unpitched note", location)
                midi = _pitch_to_midi(pitch_el, location)
                ties = [t.get("type") for t in el.findall("tie")]
                lyric_text = None
                lyric_syllabic = None
                for ly in el.findall("lyric"):
                    if ly.get("number", "1") != "1":
                        if not verse_warned:
                            warnings.warn(
                                f"{location}: only lyric verse 1 is read; others ignored"
                            )
                            verse_warned = True
                        continue
                    if lyric_text is not None:
                        continue
                    lyric_text = ly.findtext("text", "")
                    raw_syllabic = ly.findtext("syllabic", "single")
                    lyric_syllabic = _SYLLABIC_ALIASES.get(raw_syllabic)
                    if lyric_syllabic is None:
                        raise XmlError(f"bad syllabic {raw_syllabic!r} (at {location})")
                notes.append(
                    _RawNote(
                        onset=onset,
                        duration=dur,
                        pitch=midi,
                        lyric_text=lyric_text,
                        lyric_syllabic=lyric_syllabic,
                        tie_start="start" in ties,
                        tie_stop="stop" in ties,
                    )
                )
                if not is_chord:
                    cursor += dur
    return notes, tempos


def _merge_ties(raws: list[_RawNote]) -> list[_RawNote]:
    merged: list[_RawNote] = []
    open_by_pitch: dict[int, _RawNote] = {}
    for rn in sorted(raws, key=lambda r: (r.onset, r.pitch)):
        prev = open_by_pitch.get(rn.pitch)
        if rn.tie_stop and prev is not None:
            prev.duration = rn.onset + rn.duration - prev.onset
            if not rn.tie_start:
                del open_by_pitch[rn.pitch]
            continue
        merged.append(rn)
        if rn.tie_start:
            open_by_pitch[rn.pitch] = rn
    return merged


def parse_musicxml(path, part_hint: Optional[str] = None):
    """Parse a score into (vocal notes, accompaniment notes, tempo map).

    The vocal part is ``part_hint`` (id or name) when given, otherwise the
    part with the most lyric elements.
    """
    root = _read_xml_root(path)
    if root.tag != "score-partwise":
        raise UnsupportedConstruct(f"unsupported document type {root.tag!r}", str(path))
    part_names = {}
    for sp in root.findall(".//score-part"):
        part_names[sp.get("id")] = sp.findtext("part-name", "") or ""
    parts = root.findall("part")
    if not parts:
        raise XmlError(f"{path}: no parts")

    def lyric_count(part):
        return len(part.findall(".//lyric"))

    vocal_part = None
    if part_hint is not None:
        for part in parts:
            pid = part.get("id")
            if pid == part_hint or part_names.get(pid, "") == part_hint:
                vocal_part = part
                break
        if vocal_part is None:
            raise NoVocalPart(f"part {part_hint!r} not found")
    else:
        vocal_part = max(parts, key=lyric_count)
        if lyric_count(vocal_part) == 0:
            raise NoVocalPart("no part carries lyrics")

    tempos_all: list[tuple[float, float]] = []
    vocal_raw: list[_RawNote] = []
    accomp: list[AccompNote] = []
    for part in parts:
        raws, tempos = _parse_part(part, part.get("id"))
        tempos_all.extend(tempos)
        raws = _merge_ties(raws)
        if part is vocal_part:
            vocal_raw = raws
        else:
            accomp.extend(AccompNote(r.onset, r.duration, r.pitch) for r in raws)

    if not tempos_all:
        tempos_all = [(0.0, 120.0)]
    tm = TempoMap.from_changes(tempos_all)

    vocal: list[VocalNote] = []
    for rn in sorted(vocal_raw, key=lambda r: r.onset):
        if rn.lyric_text is not None:
            vocal.append(
                VocalNote(rn.onset, rn.duration, rn.pitch, rn.lyric_text, rn.lyric_syllabic)
            )
        else:
            # melisma continuation: no new syllable on this note
            vocal.append(VocalNote(rn.onset, rn.duration, rn.pitch, "", "middle"))
    if not vocal:
        raise NoVocalPart(f"part {vocal_part.get('id')!r} has no sung notes")
    return vocal, accomp, tm


# -- timeline assembly ---------------------------------------------------------


def _norm_word(text: str) -> str:
    return "".join(ch for ch in text.lower() if ch.isalnum())


def build_timeline(
    notes: list[VocalNote],
    tm: TempoMap,
    line_text: Optional[str] = None,
) -> LyricsTimeline:
    """Assemble words from syllabic runs and lines from a sidecar lyrics text.

    Words come from start..end runs (single = one-note word); notes with an
    empty syllable extend the previous word (melisma).  Lines match the
    sidecar greedily by word sequence, case- and punctuation-insensitive;
    without a sidecar all words form one line.
    """
    if any(b.onset < a.onset for a, b in zip(notes, notes[1:])):
        raise WordAssemblyError("notes must be sorted by onset")
    words: list[WordUnit] = []
    open_word: Optional[WordUnit] = None
    note_index = 0
    for note in notes:
        unit = NoteUnit(
            index=note_index,
            text=note.syllable,
            beat=note.onset,
            score_time=tm.time_at_beat(note.onset),
            pitch=note.pitch,
            duration_beats=note.duration,
            syllabic=note.syllabic,
        )
        note_index += 1
        if note.syllable == "" and note.syllabic == "middle":
            # melisma continuation attaches to whichever word came last
            target = open_word if open_word is not None else (words[-1] if words else None)
            if target is None:
                raise WordAssemblyError("melisma continuation before any word")
            target.notes.append(unit)
            continue
        if note.syllabic == "single":
            if open_word is not None:
                raise WordAssemblyError(
                    f"word {open_word.text!r} still open at beat {note.onset}"
                )
            words.append(
                WordUnit(index=len(words), text=note.syllable, beat=note.onset,
                         score_time=unit.score_time, notes=[unit])
            )
        elif note.syllabic == "start":
            if open_word is not None:
                raise WordAssemblyError(
                    f"dangling word start {open_word.text!r} at beat {note.onset}"
                )
            open_word = WordUnit(
                index=len(words), text=note.syllable, beat=note.onset,
                score_time=unit.score_time, notes=[unit]
            )
        elif note.syllabic == "middle":
            if open_word is None:
                raise WordAssemblyError(f"middle syllable with no open word at beat {note.onset}")
            open_word.text += note.syllable
            open_word.notes.append(unit)
        elif note.syllabic == "end":
            if open_word is None:
                raise WordAssemblyError(f"dangling word end at beat {note.onset}")
            open_word.text += note.syllable
            open_word.notes.append(unit)
            words.append(open_word)
            open_word = None
    if open_word is not None:
        raise WordAssemblyError(f"unterminated word {open_word.text!r}")
    if not words:
        raise WordAssemblyError("no words assembled")

    lines: list[LineUnit] = []
    if line_text is None:
        lines.append(
            LineUnit(index=0, text=" ".join(w.text for w in words), beat=words[0].beat,
                     score_time=words[0].score_time, words=words)
        )
    else:
        sidecar = [ln.split() for ln in line_text.splitlines() if ln.strip()]
        wi = 0
        for li, line_words in enumerate(sidecar):
            group = []
            for lw in line_words:
                if wi >= len(words):
                    raise LineMatchError(
                        f"lyrics line {li + 1}: ran out of score words at {lw!r}"
                    )
                if _norm_word(lw) != _norm_word(words[wi].text):
                    raise LineMatchError(
                        f"lyrics line {li + 1}: {lw!r} != score word {words[wi].text!r}"
                    )
                group.append(words[wi])
                wi += 1
            if not group:
                continue
            lines.append(
                LineUnit(index=len(lines), text=" ".join(w.text for w in group),
                         beat=group[0].beat, score_time=group[0].score_time, words=group)
            )
        if wi != len(words):
            raise LineMatchError(
                f"score has {len(words) - wi} words beyond the last lyrics line"
            )
    timeline = LyricsTimeline(lines, tm)
    timeline.validate()
    return timeline
