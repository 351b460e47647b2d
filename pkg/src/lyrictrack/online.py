"""Windowed online time warping: incremental alignment of a streamed target
against precomputed reference features.

The state machine follows the classic incremental scheme: per arriving target
frame the accumulated-cost frontier grows along the current target row, then
the reference position advances while the frontier argmin asks for it, at most
``max_run_count`` consecutive times before the other direction is forced.
Cost lookups live in a windowed band, so work and memory per step stay
bounded by the window length regardless of performance duration.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionMismatch, EmptyInput
from .features import FeatureMatrix, metric_rows
from .timemap import WarpingPath

INF = float("inf")


@dataclass(frozen=True)
class OltwConfig:
    window_seconds: float = 3.0
    max_run_count: int = 3
    steps: tuple[tuple[int, int], ...] = ((1, 1), (1, 0), (0, 1))
    weights: tuple[float, ...] = (1.0, 1.0, 1.0)
    metric: Optional[str] = None  # None: take the reference matrix's metric
    normalize_cost: bool = True
    median_filter: int = 5  # 0 disables report smoothing

    def __post_init__(self):
        if self.max_run_count < 1:
            raise ConfigError("max_run_count must be >= 1")
        if len(self.steps) != len(self.weights):
            raise ConfigError("one weight per step required")
        if self.median_filter < 0:
            raise ConfigError("median_filter must be >= 0")


class OltwState:
    """Single-owner aligner state; step() is synchronous and not thread-safe."""

    def __init__(self, ref: FeatureMatrix, cfg: OltwConfig):
        ref_data = ref.data if isinstance(ref, FeatureMatrix) else np.asarray(ref)
        if ref_data.shape[0] == 0:
            raise EmptyInput("reference features are empty")
        frame_rate = ref.clock.frame_rate if isinstance(ref, FeatureMatrix) else 25
        c = int(round(cfg.window_seconds * frame_rate))
        if c < 2:
            raise ConfigError(
                f"window of {cfg.window_seconds}s is {c} frames; need at least 2"
            )
        metric = cfg.metric
        if metric is None:
            metric = getattr(ref, "metric", None) or "euclidean"
        self.ref = ref_data
        self.cfg = cfg
        self.metric = metric
        self.c = c
        self.n_ref = ref_data.shape[0]
        self.t = 0  # target frames consumed
        self.j = 0  # reference frontier position
        self.cells: dict[tuple[int, int], float] = {}
        self.run_count = 0
        self.prev_dir: Optional[str] = None
        self.pending_both = False
        self.at_end = False
        self.cells_evaluated = 0
        self._tail: deque[tuple[int, np.ndarray]] = deque(maxlen=c)
        self._raw_reports: deque[int] = deque(maxlen=max(cfg.median_filter, 1))
        self._reported = 0.0
        self.history: list[tuple[float, int]] = []

    # -- DP cell evaluation --

    def _dp_value(self, a: int, b: int, d: float) -> float:
        best = INF
        cells = self.cells
        for (da, db), w in zip(self.cfg.steps, self.cfg.weights):
            prev = cells.get((a - da, b - db))
            if prev is not None and prev + w * d < best:
                best = prev + w * d
        if best is INF:
            return d if (a, b) == (0, 0) else INF
        return best

    def _frame_dist(self, frame: np.ndarray, active, ref_block: np.ndarray) -> np.ndarray:
        if active is None:
            return metric_rows(frame, ref_block, self.metric)
        return metric_rows(frame[active], ref_block[:, active], self.metric)

    def _eval_row(self, b: int, frame: np.ndarray, active) -> None:
        a_lo = max(0, self.j - self.c + 1)
        dists = self._frame_dist(frame, active, self.ref[a_lo : self.j + 1])
        cells = self.cells
        for i, a in enumerate(range(a_lo, self.j + 1)):
            cells[(a, b)] = self._dp_value(a, b, float(dists[i]))
        self.cells_evaluated += self.j + 1 - a_lo

    def _eval_col(self, a: int) -> None:
        if not self._tail:
            return
        # the tail deque holds exactly the last min(t, c) target frames
        first_b = self._tail[0][0]
        cells = self.cells
        if any(act is not None for _, _, act in self._tail):
            dists = [
                float(self._frame_dist(fr, act, self.ref[a : a + 1])[0])
                for _, fr, act in self._tail
            ]
        else:
            block = np.stack([fr for _, fr, _ in self._tail])
            dists = metric_rows(self.ref[a], block, self.metric)
        for i, b in enumerate(range(first_b, self.t)):
            cells[(a, b)] = self._dp_value(a, b, float(dists[i]))
        self.cells_evaluated += self.t - first_b

    # -- frontier scan --

    def _frontier_best(self) -> tuple[int, int]:
        """Cell with minimal (normalized) cost on the frontier row + column."""
        t_cur = self.t - 1
        norm = self.cfg.normalize_cost
        cells = self.cells
        best_val = INF
        best = (self.j, t_cur)
        corner = cells.get((self.j, t_cur))
        if corner is not None:
            best_val = corner / (self.j + t_cur + 2) if norm else corner
        for a in range(self.j, max(0, self.j - self.c + 1) - 1, -1):
            v = cells.get((a, t_cur))
            if v is None:
                continue
            nv = v / (a + t_cur + 2) if norm else v
            if nv < best_val:
                best_val, best = nv, (a, t_cur)
        for b in range(t_cur, max(0, self.t - self.c) - 1, -1):
            v = cells.get((self.j, b))
            if v is None:
                continue
            nv = v / (self.j + b + 2) if norm else v
            if nv < best_val:
                best_val, best = nv, (self.j, b)
        return best

    def _decide(self) -> str:
        if self.j >= self.n_ref - 1:
            self.at_end = True
            return "target"
        if self.t < self.c:
            return "both"
        if self.run_count >= self.cfg.max_run_count:
            if self.prev_dir == "ref":
                return "target"
            if self.prev_dir == "target":
                return "ref"
        a, b = self._frontier_best()
        if a == self.j and b == self.t - 1:
            return "both"
        if b == self.t - 1:
            return "target"  # current target frame matches an earlier ref
        return "ref"  # current ref position matches an earlier target frame

    def _commit(self, dec: str) -> None:
        self.run_count = self.run_count + 1 if dec == self.prev_dir else 1
        if dec != "both":
            self.prev_dir = dec

    def _advance_ref(self) -> None:
        self.j += 1
        self._eval_col(self.j)

    def _prune(self) -> None:
        # predecessors ever needed again sit within one window of the frontier
        if len(self.cells) <= 3 * self.c * self.c:
            return
        min_a = self.j - self.c - 1
        min_b = self.t - self.c - 1
        self.cells = {
            ab: v for ab, v in self.cells.items() if ab[0] >= min_a and ab[1] >= min_b
        }

    def step(self, target_frame: np.ndarray, active=None) -> float:
        """Consume one target frame; returns the smoothed reference position.

        ``active`` restricts the distance to a column slice for this frame
        (the tracker's degraded chroma-only matching when posteriors stall).
        """
        frame = np.asarray(target_frame, dtype=np.float64)
        if frame.ndim != 1 or frame.shape[0] != self.ref.shape[1]:
            raise DimensionMismatch(
                f"target frame dims {frame.shape} vs ref {self.ref.shape[1]}"
            )
        b = self.t
        self._tail.append((b, frame, active))
        self.t += 1
        self._eval_row(b, frame, active)
        if self.pending_both:
            self.pending_both = False
            if self.j < self.n_ref - 1:
                self._advance_ref()
        while True:
            dec = self._decide()
            self._commit(dec)
            if dec == "ref":
                self._advance_ref()
                continue
            if dec == "both":
                self.pending_both = True
            break
        raw_a, _ = self._frontier_best()
        self._raw_reports.append(raw_a)
        if self.cfg.median_filter > 1:
            smoothed = float(np.median(list(self._raw_reports)))
        else:
            smoothed = float(raw_a)
        self._reported = max(self._reported, smoothed)
        self.history.append((self._reported, b))
        self._prune()
        return self._reported

    @property
    def band_cells(self) -> int:
        return len(self.cells)


def oltw_init(ref: FeatureMatrix, cfg: OltwConfig = OltwConfig()) -> OltwState:
    return OltwState(ref, cfg)


def oltw_step(state: OltwState, target_frame: np.ndarray) -> tuple[OltwState, float]:
    return state, state.step(target_frame)


def oltw_run(ref: FeatureMatrix, target: FeatureMatrix, cfg: OltwConfig = OltwConfig()) -> WarpingPath:
    """Batch driver: feed every target frame, record (ref, target) per step."""
    target_data = target.data if isinstance(target, FeatureMatrix) else np.asarray(target)
    if target_data.shape[0] == 0:
        raise EmptyInput("target features are empty")
    state = oltw_init(ref, cfg)
    pairs = []
    for b in range(target_data.shape[0]):
        _, pos = oltw_step(state, target_data[b])
        pairs.append((int(round(pos)), b))
    return WarpingPath(pairs)
