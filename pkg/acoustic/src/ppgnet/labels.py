"""Phoneme label sets, collapse maps, and TIMIT-style framewise labels.

Collapse tables are TSV files (``source<TAB>target``, ``#`` comments), the
same editable format the alignment engine ships.  Annotations follow the
classic ``.phn`` layout: one ``start_sample end_sample label`` line per
segment at 16 kHz.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .melspec import HOP, frame_count

SILENCE = {"sil", "silence", "h#", "pau"}


def _read_pairs(text: str) -> list[tuple[str, str]]:
    pairs = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        src, dst = ln.split("\t")
        pairs.append((src.strip(), dst.strip()))
    return pairs


def _data_pairs(name: str) -> list[tuple[str, str]]:
    return _read_pairs(resources.files("ppgnet.data").joinpath(name).read_text("utf-8"))


def _ordered_targets(pairs) -> tuple[str, ...]:
    seen = []
    for _, dst in pairs:
        if dst not in seen:
            seen.append(dst)
    return tuple(seen)


@dataclass(frozen=True)
class LabelSet:
    name: str
    labels: tuple[str, ...]

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


def builtin_sets() -> dict[str, LabelSet]:
    p61_39 = _data_pairs("timit61_to_phoneme39.tsv")
    p39_14 = _data_pairs("phoneme39_to_viseme14.tsv")
    p39_5 = _data_pairs("phoneme39_to_phoneme5.tsv")
    return {
        "timit61": LabelSet("timit61", tuple(s for s, _ in p61_39)),
        "phoneme39": LabelSet("phoneme39", _ordered_targets(p61_39)),
        "viseme14": LabelSet("viseme14", _ordered_targets(p39_14)),
        "phoneme5": LabelSet("phoneme5", _ordered_targets(p39_5)),
    }


SETS = builtin_sets()


def collapse_chain(source: str, target: str) -> dict[str, str]:
    """Composed source-to-target label assignment through the shipped maps."""
    if source == target:
        return {lb: lb for lb in SETS[source].labels}
    direct = {
        ("timit61", "phoneme39"): "timit61_to_phoneme39.tsv",
        ("phoneme39", "viseme14"): "phoneme39_to_viseme14.tsv",
        ("phoneme39", "phoneme5"): "phoneme39_to_phoneme5.tsv",
    }
    if (source, target) in direct:
        return dict(_data_pairs(direct[(source, target)]))
    if source == "timit61":
        first = collapse_chain("timit61", "phoneme39")
        second = collapse_chain("phoneme39", target)
        return {s: second[d] for s, d in first.items()}
    raise KeyError(f"no collapse chain {source} -> {target}")


def read_phn(path) -> list[tuple[int, int, str]]:
    segs = []
    for ln in Path(path).read_text(encoding="utf-8").splitlines():
        ln = ln.strip()
        if not ln:
            continue
        start, end, label = ln.split()
        segs.append((int(start), int(end), label))
    return segs


def frame_targets(
    segments: list[tuple[int, int, str]],
    n_samples: int,
    target_set: LabelSet,
    source_set: str = None,
) -> np.ndarray:
    """Per-frame class ids: the label of each frame's center sample.

    Labels outside the target set are collapsed through the shipped maps when
    ``source_set`` names one; unlabeled spans map to the silence class.
    """
    mapping = None
    if source_set and source_set != target_set.name:
        mapping = collapse_chain(source_set, target_set.name)
    sil = next(i for i, lb in enumerate(target_set.labels) if lb in SILENCE)
    n = frame_count(n_samples)
    out = np.full(n, sil, dtype=np.int64)
    for start, end, label in segments:
        if mapping is not None:
            label = mapping[label]
        if label in SILENCE and label not in target_set.labels:
            idx = sil
        else:
            idx = target_set.index(label)
        k0 = max(0, int(np.ceil(start / HOP)))
        k1 = min(n - 1, end // HOP)
        for k in range(k0, k1 + 1):
            center = k * HOP
            if start <= center < end:
                out[k] = idx
    return out
