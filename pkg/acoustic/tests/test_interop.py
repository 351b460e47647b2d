"""Cross-package integration through external interfaces only: the alignment
engine's CLI consumes this package's FMX1 exports and its PPGSTREAM server as
a live provider.  Skipped when the lyrictrack CLI is not installed."""
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest
import torch

from ppgnet.fmx import save_ppg
from ppgnet.infer import export_ppg
from ppgnet.model import ModelConfig, PhonemeCrnn, save_checkpoint
from ppgnet.wavio import read_wav, write_wav

lyrictrack = shutil.which("lyrictrack")

pytestmark = pytest.mark.skipif(lyrictrack is None, reason="lyrictrack CLI not installed")

SCORE_XML = """<?xml version="1.0"?><score-partwise version="3.1"><part-list>
<score-part id="P1"><part-name>Voice</part-name></score-part></part-list>
<part id="P1"><measure number="1">
<attributes><divisions>4</divisions></attributes>
<direction><sound tempo="120"/></direction>
<note><rest/><duration>4</duration></note>
<note><pitch><step>A</step><octave>3</octave></pitch><duration>8</duration>
<lyric number="1"><syllabic>single</syllabic><text>la</text></lyric></note>
<note><pitch><step>C</step><octave>4</octave></pitch><duration>8</duration>
<lyric number="1"><syllabic>single</syllabic><text>le</text></lyric></note>
<note><pitch><step>E</step><octave>4</octave></pitch><duration>8</duration>
<lyric number="1"><syllabic>single</syllabic><text>lu</text></lyric></note>
</measure></part></score-partwise>
"""


def run(*args, **kw):
    return subprocess.run(list(args), check=True, capture_output=True, **kw)


def test_track_through_ppgstream_server(tmp_path):
    score = tmp_path / "score.musicxml"
    score.write_text(SCORE_XML)
    run(lyrictrack, "synth", str(score), str(tmp_path / "ref.wav"))

    torch.manual_seed(3)
    model = PhonemeCrnn(ModelConfig(5, hidden=64, dropout=0.0))
    model.eval()
    ckpt = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, model, "phoneme5")

    # prepare offline artifacts, then posteriors for ref (file) from this model
    run(lyrictrack, "prepare", str(score), str(tmp_path / "ref.wav"), str(tmp_path / "prep"))
    ref = read_wav(tmp_path / "prep" / "ref.wav")
    save_ppg(tmp_path / "ppg_ref.fmx", export_ppg(model, ref))
    write_wav(tmp_path / "target.wav", ref)  # self-alignment target

    serve_cmd = f"{sys.executable} -m ppgnet.cli serve {ckpt}"
    out = run(
        lyrictrack, "track", str(tmp_path / "prep"), str(tmp_path / "target.wav"),
        "--features", "chroma+ppg:phoneme5",
        "--ppg-provider", f"exec:{serve_cmd}",
        "--ref-ppg", f"file:{tmp_path / 'ppg_ref.fmx'}",
        "--out", str(tmp_path / "events.jsonl"),
    )
    events = [json.loads(l) for l in (tmp_path / "events.jsonl").read_text().splitlines()]
    notes = [e for e in events if e["unit"]["level"] == "note"]
    assert [e["unit"]["index"] for e in notes] == [0, 1, 2]
    assert "stalled 0" in out.stderr.decode()
