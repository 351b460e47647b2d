"""Framewise cross-entropy training on wav + .phn labeled audio.

Dataset layout: a directory of ``<utt>.wav`` with sibling ``<utt>.phn``
(``start_sample end_sample label`` lines at 16 kHz).  Labels are collapsed to
the chosen phoneme set through the shipped maps when a source set is named;
otherwise they must already belong to the target set.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from .labels import SETS, LabelSet, frame_targets, read_phn
from .melspec import log_mel
from .model import ModelConfig, PhonemeCrnn, save_checkpoint
from .wavio import read_wav


@dataclass
class TrainConfig:
    set_name: str = "phoneme5"
    source_set: Optional[str] = None  # e.g. timit61; None = labels already in set
    epochs: int = 10
    lr: float = 1e-3
    batch_size: int = 8
    hidden: int = 1024
    dropout: float = 0.1
    seed: int = 17


def load_utterances(dataset_dir, target: LabelSet, source_set: Optional[str]):
    """(mel, targets) pairs for every wav/phn sibling pair in the directory."""
    dataset_dir = Path(dataset_dir)
    wavs = sorted(dataset_dir.glob("*.wav"))
    if not wavs:
        raise FileNotFoundError(f"{dataset_dir}: no wav files")
    out = []
    for wav in wavs:
        phn = wav.with_suffix(".phn")
        if not phn.exists():
            raise FileNotFoundError(f"{phn} missing for {wav.name}")
        samples = read_wav(wav)
        mel = log_mel(samples)
        targets = frame_targets(read_phn(phn), len(samples), target, source_set)
        if len(targets) != len(mel):
            raise ValueError(f"{wav.name}: {len(targets)} labels != {len(mel)} frames")
        out.append((mel.astype(np.float32), targets))
    return out


def _pad_batch(items):
    """Stack variable-length utterances with a -100 ignore padding."""
    t_max = max(len(m) for m, _ in items)
    mel = np.zeros((len(items), t_max, items[0][0].shape[1]), dtype=np.float32)
    tgt = np.full((len(items), t_max), -100, dtype=np.int64)
    for i, (m, t) in enumerate(items):
        mel[i, : len(m)] = m
        tgt[i, : len(t)] = t
    return torch.from_numpy(mel), torch.from_numpy(tgt)


def framewise_accuracy(model: PhonemeCrnn, items) -> float:
    model.eval()
    correct = total = 0
    with torch.no_grad():
        for mel, tgt in items:
            logits, _ = model(torch.from_numpy(mel).unsqueeze(0))
            pred = logits.argmax(dim=-1).squeeze(0).numpy()
            correct += int((pred == tgt).sum())
            total += len(tgt)
    return correct / max(total, 1)


def train(dataset_dir, cfg: TrainConfig = TrainConfig(), checkpoint_path=None,
          log=print):
    """Train a classifier; returns (model, history dict)."""
    target = SETS[cfg.set_name]
    items = load_utterances(dataset_dir, target, cfg.source_set)
    torch.manual_seed(cfg.seed)
    model = PhonemeCrnn(ModelConfig(target.size, cfg.hidden, dropout=cfg.dropout))
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    loss_fn = nn.CrossEntropyLoss(ignore_index=-100)
    rng = np.random.default_rng(cfg.seed)
    history = {"epoch_loss": [], "accuracy": None}
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(items))
        losses = []
        for start in range(0, len(items), cfg.batch_size):
            batch = [items[i] for i in order[start : start + cfg.batch_size]]
            mel, tgt = _pad_batch(batch)
            opt.zero_grad()
            logits, _ = model(mel)
            loss = loss_fn(logits.reshape(-1, target.size), tgt.reshape(-1))
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        epoch_loss = float(np.mean(losses))
        history["epoch_loss"].append(epoch_loss)
        log(f"epoch {epoch + 1}/{cfg.epochs}: loss {epoch_loss:.4f}")
    history["accuracy"] = framewise_accuracy(model, items)
    log(f"framewise accuracy {history['accuracy']:.3f}")
    model.eval()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, model, cfg.set_name, {"history": history})
    return model, history


def overfit_single_batch(items, set_name="phoneme5", steps=60, lr=2e-3,
                         hidden=1024, seed=17):
    """Capacity check: fit one batch until it is memorized."""
    target = SETS[set_name]
    torch.manual_seed(seed)
    model = PhonemeCrnn(ModelConfig(target.size, hidden, dropout=0.0))
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss(ignore_index=-100)
    mel, tgt = _pad_batch(items)
    losses = []
    model.train()
    for _ in range(steps):
        opt.zero_grad()
        logits, _ = model(mel)
        loss = loss_fn(logits.reshape(-1, target.size), tgt.reshape(-1))
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
    model.eval()
    return model, losses, framewise_accuracy(model, items)
