"""Streaming inference engine and posteriorgram export.

One engine serves both paths: export_ppg drives it over a whole file, the
PPGSTREAM server drives it chunk by chunk.  Every frame goes through
identical fixed-shape module calls (3-frame conv windows, single-step LSTM),
so the two paths produce bit-identical rows.  Posteriors for frame k depend
only on samples up to k*640 + 639 (the centered window's one-frame
lookahead) and on earlier frames.
"""
from __future__ import annotations

from collections import deque

import numpy as np
import torch
import torch.nn.functional as F

from .melspec import N_MEL, StreamingMel
from .model import PhonemeCrnn, TIME_KERNEL


class StreamingInference:
    def __init__(self, model: PhonemeCrnn):
        self.model = model.eval()
        c1, _ = model.cfg.channels
        # per-conv input histories, seeded with the causal zero padding
        self._h_in = deque(
            [torch.zeros(1, 1, 1, N_MEL)] * (TIME_KERNEL - 1), maxlen=TIME_KERNEL - 1
        )
        self._h_c1 = deque(
            [torch.zeros(1, c1, 1, N_MEL)] * (TIME_KERNEL - 1), maxlen=TIME_KERNEL - 1
        )
        c2 = model.cfg.channels[1]
        self._h_b2_in = deque(
            [torch.zeros(1, c1, 1, N_MEL // 2)] * (TIME_KERNEL - 1),
            maxlen=TIME_KERNEL - 1,
        )
        self._h_c3 = deque(
            [torch.zeros(1, c2, 1, N_MEL // 2)] * (TIME_KERNEL - 1),
            maxlen=TIME_KERNEL - 1,
        )
        self._state = None
        self.mel = StreamingMel()

    @torch.no_grad()
    def _frame_posteriors(self, mel_row: np.ndarray) -> np.ndarray:
        m = self.model
        x = torch.from_numpy(mel_row.astype(np.float32)).view(1, 1, 1, N_MEL)
        b1, b2 = m.block1, m.block2
        # block 1
        win = torch.cat(list(self._h_in) + [x], dim=2)
        self._h_in.append(x)
        y = F.relu(b1.conv1(win))
        win = torch.cat(list(self._h_c1) + [y], dim=2)
        self._h_c1.append(y)
        y = F.relu(b1.conv2(win))
        y = b1.pool(y)
        # block 2
        win = torch.cat(list(self._h_b2_in) + [y], dim=2)
        self._h_b2_in.append(y)
        y = F.relu(b2.conv1(win))
        win = torch.cat(list(self._h_c3) + [y], dim=2)
        self._h_c3.append(y)
        y = F.relu(b2.conv2(win))
        y = b2.pool(y)
        seq = y.permute(0, 2, 1, 3).reshape(1, 1, m.rnn_in)
        out, self._state = m.lstm(seq, self._state)
        post = torch.softmax(m.head(out), dim=-1)
        return post.view(-1).numpy().astype(np.float64)

    def _rows(self, mel_rows: np.ndarray) -> np.ndarray:
        if mel_rows.shape[0] == 0:
            return np.zeros((0, self.model.cfg.n_phone))
        return np.stack([self._frame_posteriors(r) for r in mel_rows])

    def feed(self, samples: np.ndarray) -> np.ndarray:
        """Posterior rows for every frame completed by these samples."""
        return self._rows(self.mel.feed(samples))

    def flush(self) -> np.ndarray:
        return self._rows(self.mel.flush())


def export_ppg(model: PhonemeCrnn, samples: np.ndarray) -> np.ndarray:
    """Posteriorgram for a whole signal via the streaming engine.

    Frame count equals len(samples) // 640 + 1, the alignment engine's grid.
    """
    eng = StreamingInference(model)
    rows = [eng.feed(np.asarray(samples, dtype=np.float64))]
    rows.append(eng.flush())
    return np.vstack([r for r in rows if len(r)])


def batch_posteriors(model: PhonemeCrnn, mel: np.ndarray) -> np.ndarray:
    """Whole-sequence forward (training-style path); for sanity checks only —
    BLAS batching may differ from the streaming path in the last bits."""
    with torch.no_grad():
        post, _ = model.posteriors(torch.from_numpy(mel.astype(np.float32)).unsqueeze(0))
    return post.squeeze(0).numpy().astype(np.float64)
