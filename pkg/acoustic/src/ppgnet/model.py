"""CRNN framewise phoneme classifier.

ConvNet-style front end over (time x mel) with strictly causal time padding,
a uni-directional LSTM (hidden 1024), and a dense softmax head sized to the
phoneme set.  Causality matters: posteriors for frame k may depend only on
mel frames <= k, so every conv pads on the left of the time axis only, and
the recurrence runs forward.  The streaming engine in infer.py replays the
exact same modules one frame at a time.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .melspec import N_MEL

TIME_KERNEL = 3
TIME_CONTEXT = 2 * (TIME_KERNEL - 1)  # two conv layers before each pool


@dataclass(frozen=True)
class ModelConfig:
    n_phone: int
    hidden: int = 1024
    channels: tuple[int, int] = (32, 64)
    dropout: float = 0.1


class CausalConvBlock(nn.Module):
    """Two 3x3 convs (left-padded in time) + frequency max-pool."""

    def __init__(self, c_in: int, c_out: int, dropout: float):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, (TIME_KERNEL, 3), padding=(0, 1))
        self.conv2 = nn.Conv2d(c_out, c_out, (TIME_KERNEL, 3), padding=(0, 1))
        self.pool = nn.MaxPool2d((1, 2))
        self.drop = nn.Dropout2d(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (batch, channels, time, mel); causal pad = kernel-1 on the left
        x = F.pad(x, (0, 0, TIME_KERNEL - 1, 0))
        x = F.relu(self.conv1(x))
        x = F.pad(x, (0, 0, TIME_KERNEL - 1, 0))
        x = F.relu(self.conv2(x))
        return self.drop(self.pool(x))


class PhonemeCrnn(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c1, c2 = cfg.channels
        self.block1 = CausalConvBlock(1, c1, cfg.dropout)
        self.block2 = CausalConvBlock(c1, c2, cfg.dropout)
        # two frequency pools: 66 -> 33 -> 16
        self.rnn_in = c2 * (N_MEL // 2 // 2)
        self.lstm = nn.LSTM(self.rnn_in, cfg.hidden, batch_first=True)
        self.head = nn.Linear(cfg.hidden, cfg.n_phone)

    def conv_stack(self, mel: torch.Tensor) -> torch.Tensor:
        """(batch, time, 66) -> (batch, time, rnn_in); causal in time."""
        x = mel.unsqueeze(1)  # (B, 1, T, F)
        x = self.block1(x)
        x = self.block2(x)
        b, c, t, f = x.shape
        return x.permute(0, 2, 1, 3).reshape(b, t, c * f)

    def forward(self, mel: torch.Tensor, state=None):
        """Logits (batch, time, n_phone) plus the recurrent state."""
        seq = self.conv_stack(mel)
        out, state = self.lstm(seq, state)
        return self.head(out), state

    def posteriors(self, mel: torch.Tensor, state=None):
        logits, state = self.forward(mel, state)
        return torch.softmax(logits, dim=-1), state


def save_checkpoint(path, model: PhonemeCrnn, set_name: str, extra=None) -> None:
    torch.save(
        {
            "config": {
                "n_phone": model.cfg.n_phone,
                "hidden": model.cfg.hidden,
                "channels": list(model.cfg.channels),
                "dropout": model.cfg.dropout,
            },
            "set_name": set_name,
            "state_dict": model.state_dict(),
            "extra": extra or {},
        },
        path,
    )


def load_checkpoint(path) -> tuple[PhonemeCrnn, str, dict]:
    blob = torch.load(path, map_location="cpu", weights_only=False)
    cfg = ModelConfig(
        n_phone=blob["config"]["n_phone"],
        hidden=blob["config"]["hidden"],
        channels=tuple(blob["config"]["channels"]),
        dropout=blob["config"]["dropout"],
    )
    model = PhonemeCrnn(cfg)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, blob["set_name"], blob.get("extra", {})
