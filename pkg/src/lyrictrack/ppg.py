"""Phoneme sets, posteriorgram ingestion, and label-set collapsing.

The three built-in sets (phoneme39, viseme14, phoneme5) and the collapse
tables between them ship as editable TSV data files; any total surjective
map in the same format is accepted.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import NotStochastic, SetMismatch, UnknownLabel
from .features import FeatureMatrix, load_fmx, save_fmx
from .timemap import DEFAULT_CLOCK, FrameClock

ROW_SUM_TOL = 1e-4

PHONEME5_LABELS = ("vowel", "stop", "fricative", "nasal", "silence")


@dataclass(frozen=True)
class PhonemeSet:
    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise SetMismatch(f"{self.name}: duplicate labels")
        expected = {"phoneme39": 39, "viseme14": 14, "phoneme5": 5, "timit61": 61}
        if self.name in expected and len(self.labels) != expected[self.name]:
            raise SetMismatch(
                f"{self.name} must have {expected[self.name]} labels, got {len(self.labels)}"
            )
        if self.name == "phoneme5" and set(self.labels) != set(PHONEME5_LABELS):
            raise SetMismatch(f"phoneme5 labels must be {PHONEME5_LABELS}")

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownLabel(f"{label!r} not in {self.name}") from None


def _read_map_file(name: str) -> list[tuple[str, str]]:
    text = resources.files("lyrictrack.data").joinpath(name).read_text("utf-8")
    return parse_map_lines(text.splitlines())


def parse_map_lines(lines) -> list[tuple[str, str]]:
    pairs = []
    for ln in lines:
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        src, dst = ln.split("\t")
        pairs.append((src.strip(), dst.strip()))
    return pairs


def _ordered_targets(pairs: Sequence[tuple[str, str]]) -> tuple[str, ...]:
    seen = []
    for _, dst in pairs:
        if dst not in seen:
            seen.append(dst)
    return tuple(seen)


def _builtin_sets():
    p61_39 = _read_map_file("timit61_to_phoneme39.tsv")
    p39_14 = _read_map_file("phoneme39_to_viseme14.tsv")
    p39_5 = _read_map_file("phoneme39_to_phoneme5.tsv")
    timit61 = PhonemeSet("timit61", tuple(src for src, _ in p61_39))
    phoneme39 = PhonemeSet("phoneme39", _ordered_targets(p61_39))
    viseme14 = PhonemeSet("viseme14", _ordered_targets(p39_14))
    phoneme5 = PhonemeSet("phoneme5", _ordered_targets(p39_5))
    return {
        "timit61": timit61,
        "phoneme39": phoneme39,
        "viseme14": viseme14,
        "phoneme5": phoneme5,
    }, {("timit61", "phoneme39"): p61_39, ("phoneme39", "viseme14"): p39_14,
        ("phoneme39", "phoneme5"): p39_5}


BUILTIN_SETS, _BUILTIN_MAP_PAIRS = _builtin_sets()


def get_set(name: str) -> PhonemeSet:
    try:
        return BUILTIN_SETS[name]
    except KeyError:
        raise UnknownLabel(f"no built-in phoneme set {name!r}") from None


@dataclass(frozen=True)
class CollapseMap:
    source: PhonemeSet
    target: PhonemeSet
    assignment: dict

    def __post_init__(self):
        missing = [s for s in self.source.labels if s not in self.assignment]
        if missing:
            raise SetMismatch(f"collapse map not total, missing {missing}")
        bad = [d for d in self.assignment.values() if d not in self.target.labels]
        if bad:
            raise SetMismatch(f"collapse map targets unknown labels {sorted(set(bad))}")
        covered = set(self.assignment.values())
        if covered != set(self.target.labels):
            raise SetMismatch(
                f"collapse map not surjective, unreached: {set(self.target.labels) - covered}"
            )

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.source.size, self.target.size))
        for src, dst in self.assignment.items():
            m[self.source.index(src), self.target.index(dst)] = 1.0
        return m

    def compose(self, then: "CollapseMap") -> "CollapseMap":
        if self.target.labels != then.source.labels:
            raise SetMismatch("maps do not compose: target != next source")
        assignment = {s: then.assignment[d] for s, d in self.assignment.items()}
        return CollapseMap(self.source, then.target, assignment)

    @classmethod
    def from_pairs(cls, pairs, source: PhonemeSet, target: PhonemeSet) -> "CollapseMap":
        return cls(source, target, dict(pairs))

    @classmethod
    def builtin(cls, source_name: str, target_name: str) -> "CollapseMap":
        src, dst = get_set(source_name), get_set(target_name)
        key = (source_name, target_name)
        if key in _BUILTIN_MAP_PAIRS:
            return cls.from_pairs(_BUILTIN_MAP_PAIRS[key], src, dst)
        if source_name == "timit61":
            first = cls.builtin("timit61", "phoneme39")
            return first.compose(cls.builtin("phoneme39", target_name))
        raise UnknownLabel(f"no built-in map {source_name} -> {target_name}")

    @classmethod
    def load(cls, path, source: PhonemeSet, target: PhonemeSet) -> "CollapseMap":
        with open(path, encoding="utf-8") as fh:
            return cls.from_pairs(parse_map_lines(fh), source, target)

    @classmethod
    def identity(cls, s: PhonemeSet) -> "CollapseMap":
        return cls(s, s, {lb: lb for lb in s.labels})


@dataclass(frozen=True)
class PpgMatrix:
    """frames x n_phone row-stochastic posteriorgram at the engine clock."""

    data: np.ndarray
    set: PhonemeSet
    clock: FrameClock = DEFAULT_CLOCK

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != self.set.size:
            raise SetMismatch(
                f"data dims {self.data.shape} do not match {self.set.name}"
                f" ({self.set.size} labels)"
            )
        if np.any(self.data < -1e-12) or np.any(self.data > 1.0 + 1e-9):
            raise NotStochastic("entries must lie in [0, 1]")
        sums = self.data.sum(axis=1)
        if self.data.shape[0] and np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
            worst = float(np.max(np.abs(sums - 1.0)))
            raise NotStochastic(f"row sums deviate from 1 by up to {worst}")
        self.data.setflags(write=False)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    def as_features(self) -> FeatureMatrix:
        return FeatureMatrix(self.data, "ppg", self.clock)


def load_ppg(path, expected_set: PhonemeSet, clock: FrameClock = DEFAULT_CLOCK) -> PpgMatrix:
    """Read an FMX1 file with the ppg kind tag and validate it row-stochastic."""
    fm = load_fmx(path, clock)
    if fm.kind != "ppg":
        raise SetMismatch(f"{path}: kind {fm.kind!r}, expected ppg")
    if fm.dims != expected_set.size:
        raise SetMismatch(
            f"{path}: {fm.dims} dims != {expected_set.size} labels of {expected_set.name}"
        )
    return PpgMatrix(np.array(fm.data), expected_set, clock)


def save_ppg(path, ppg: PpgMatrix) -> None:
    save_fmx(path, ppg.as_features())


def collapse(ppg: PpgMatrix, cmap: CollapseMap) -> PpgMatrix:
    """Sum source probabilities into their target labels; mass is conserved."""
    if ppg.set.labels != cmap.source.labels:
        raise SetMismatch(
            f"posteriorgram set {ppg.set.name} != map source {cmap.source.name}"
        )
    out = ppg.data @ cmap.matrix()
    return PpgMatrix(out, cmap.target, ppg.clock)


def synthetic_ppg(
    labels: Sequence[str],
    pset: PhonemeSet,
    confidence: float = 1.0,
    clock: FrameClock = DEFAULT_CLOCK,
) -> PpgMatrix:
    """Test-fixture posteriors: `confidence` on the true label, rest uniform.

    Rows are computed in float32 so FMX1 round trips are bit-exact.
    """
    if not (0.0 < confidence <= 1.0):
        raise ValueError(f"confidence must be in (0, 1], got {confidence}")
    n = pset.size
    off = np.float32((1.0 - confidence) / (n - 1)) if n > 1 else np.float32(0.0)
    rows = np.full((len(labels), n), off, dtype=np.float32)
    for i, lb in enumerate(labels):
        rows[i, pset.index(lb)] = np.float32(confidence)
    return PpgMatrix(rows.astype(np.float64), pset, clock)
