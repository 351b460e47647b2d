"""Offline alignment: full/banded DTW, DLNCO onset features, multi-scale DTW,
and pseudo-label generation for the lyrics timeline.

The DP core is one implementation shared by the full and band-constrained
cases, so a multi-scale run whose band covers the whole matrix reproduces the
unconstrained path exactly, bit for bit.  Traceback tie-breaks follow the
configured step order (diagonal first by default).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d

from .errors import BandInfeasible, EmptyInput, LengthMismatch, ConfigError, OutOfRange
from .features import FeatureMatrix, metric_rows, normalize_frame
from .score import LyricsTimeline
from .timemap import DEFAULT_CLOCK, FrameClock, WarpingPath

INF = float("inf")


@dataclass(frozen=True)
class DtwConfig:
    steps: tuple[tuple[int, int], ...] = ((1, 1), (1, 0), (0, 1))
    weights: tuple[float, ...] = (1.0, 1.0, 1.0)
    band: Optional[tuple[np.ndarray, np.ndarray]] = None  # per-row (lo, hi), inclusive

    def __post_init__(self):
        if (1, 1) not in self.steps:
            raise ConfigError("step set must contain the diagonal step (1, 1)")
        if len(self.weights) != len(self.steps):
            raise ConfigError("one weight per step required")
        if any(w <= 0 for w in self.weights):
            raise ConfigError("step weights must be positive")
        if any(da < 0 or db < 0 or (da, db) == (0, 0) for da, db in self.steps):
            raise ConfigError("steps must be non-negative and non-zero")


@dataclass(frozen=True)
class BlockCost:
    """Additive per-frame distance over column blocks of stacked features."""

    blocks: tuple[tuple[slice, str, float], ...]

    def rows(self, x: np.ndarray, block: np.ndarray) -> np.ndarray:
        total = np.zeros(block.shape[0])
        for sl, metric, weight in self.blocks:
            total += weight * metric_rows(x[sl], block[:, sl], metric)
        return total


def _as_array(x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _cost_model(metric, dims: int) -> BlockCost:
    if isinstance(metric, BlockCost):
        return metric
    return BlockCost(((slice(0, dims), metric, 1.0),))


def dtw_full(X, Y, metric="euclidean", cfg: DtwConfig = DtwConfig()):
    """Globally optimal warping path under the configured steps and weights.

    Returns (WarpingPath, cost).  ``metric`` is 'euclidean', 'cosine', or a
    BlockCost.  With ``cfg.band`` set, cells outside the per-row band are
    unreachable and BandInfeasible is raised when no path survives.
    """
    X, Y = _as_array(X), _as_array(Y)
    n, m = X.shape[0], Y.shape[0]
    if n == 0 or m == 0:
        raise EmptyInput("DTW inputs must be non-empty")
    if X.shape[1] != Y.shape[1]:
        raise LengthMismatch(f"dims {X.shape[1]} != {Y.shape[1]}")
    model = _cost_model(metric, X.shape[1])

    if cfg.band is None:
        lo = np.zeros(n, dtype=np.int64)
        hi = np.full(n, m - 1, dtype=np.int64)
    else:
        lo = np.clip(np.asarray(cfg.band[0], dtype=np.int64), 0, m - 1)
        hi = np.clip(np.asarray(cfg.band[1], dtype=np.int64), 0, m - 1)
        if len(lo) != n or len(hi) != n:
            raise ConfigError("band must supply (lo, hi) per X frame")
        if np.any(hi < lo):
            raise BandInfeasible("band has empty rows")
        if lo[0] > 0 or hi[-1] < m - 1:
            raise BandInfeasible("band excludes an endpoint")

    horiz = [(db, w) for (da, db), w in zip(cfg.steps, cfg.weights) if da == 0]
    verts = [((da, db), w) for (da, db), w in zip(cfg.steps, cfg.weights) if da > 0]

    # per-row accumulated cost and local cost, stored band-compact
    acc_rows: list[np.ndarray] = []
    cost_rows: list[np.ndarray] = []
    for a in range(n):
        l, h = lo[a], hi[a]
        d_row = model.rows(X[a], Y[l : h + 1])
        cost_rows.append(d_row)
        width = h - l + 1
        if a == 0:
            base = np.full(width, INF)
            if l == 0:
                base[0] = d_row[0]
        else:
            base = np.full(width, INF)
            for (da, db), w in verts:
                pa = a - da
                if pa < 0:
                    continue
                pl, ph = lo[pa], hi[pa]
                # predecessor columns for cells l..h are (l-db)..(h-db)
                src_lo = max(pl, l - db)
                src_hi = min(ph, h - db)
                if src_hi < src_lo:
                    continue
                seg = acc_rows[pa][src_lo - pl : src_hi - pl + 1] + w * d_row[
                    src_lo + db - l : src_hi + db - l + 1
                ]
                dst = slice(src_lo + db - l, src_hi + db - l + 1)
                base[dst] = np.minimum(base[dst], seg)
        if horiz:
            vals = base.tolist()
            drow = d_row.tolist()
            for j in range(width):
                v = vals[j]
                for db, w in horiz:
                    if j - db >= 0:
                        cand = vals[j - db] + w * drow[j]
                        if cand < v:
                            v = cand
                vals[j] = v
            base = np.asarray(vals)
        acc_rows.append(base)

    final = acc_rows[n - 1][m - 1 - lo[n - 1]] if hi[n - 1] >= m - 1 else INF
    if not math.isfinite(final):
        raise BandInfeasible("no monotone path fits inside the band")

    # traceback; tie-break follows cfg.steps order
    pairs = [(n - 1, m - 1)]
    a, b = n - 1, m - 1
    while (a, b) != (0, 0):
        cur = acc_rows[a][b - lo[a]]
        found = False
        for (da, db), w in zip(cfg.steps, cfg.weights):
            pa, pb = a - da, b - db
            if pa < 0 or pb < 0 or not (lo[pa] <= pb <= hi[pa]):
                continue
            if acc_rows[pa][pb - lo[pa]] + w * cost_rows[a][b - lo[a]] == cur:
                a, b = pa, pb
                pairs.append((a, b))
                found = True
                break
        if not found:  # pragma: no cover - DP guarantees a predecessor
            raise BandInfeasible(f"traceback stuck at ({a}, {b})")
    pairs.reverse()
    return WarpingPath(pairs, strict=False), float(final)


# -- DLNCO ---------------------------------------------------------------------


@dataclass(frozen=True)
class DlncoParams:
    norm_window: float = 1.0  # seconds
    decay_length: int = 10  # frames
    floor: float = 1e-4

    def __post_init__(self):
        if self.norm_window <= 0 or self.decay_length <= 0 or self.floor <= 0:
            raise ConfigError("DLNCO parameters must be positive")


def dlnco(
    chroma_raw: FeatureMatrix,
    p: DlncoParams = DlncoParams(),
) -> FeatureMatrix:
    """Decaying locally normalized chroma onsets.

    Half-wave-rectified temporal differences per pitch class, normalized by
    the local maximum over a centered window (with a floor), then spread
    forward under a sqrt(1 - i/decay) kernel taking the max of overlaps.
    Uses both past and future context, so this stays offline-only.
    """
    data = chroma_raw.data
    onset = np.maximum(np.diff(data, axis=0, prepend=data[:1]), 0.0)
    win = max(1, int(round(p.norm_window * chroma_raw.clock.frame_rate)))
    frame_max = onset.max(axis=1) if onset.shape[1] else np.zeros(len(onset))
    local = maximum_filter1d(frame_max, size=win, mode="constant", cval=0.0)
    norm = onset / np.maximum(local, p.floor)[:, None]
    out = np.zeros_like(norm)
    for i in range(p.decay_length):
        k = math.sqrt(1.0 - i / p.decay_length)
        shifted = norm[: len(norm) - i] * k
        out[i:] = np.maximum(out[i:], shifted)
    return FeatureMatrix(out, "dlnco", chroma_raw.clock)


def offline_cost(
    ref_chroma: FeatureMatrix,
    score_chroma: FeatureMatrix,
    ref_dlnco: FeatureMatrix,
    score_dlnco: FeatureMatrix,
    chroma_weight: float = 1.0,
    dlnco_weight: float = 1.0,
):
    """Stacked features + block cost for the score-to-ref offline alignment.

    Returns (score_stack, ref_stack, model): cosine over L2-normalized chroma
    plus weighted euclidean over the DLNCO block, so DTW paths run from score
    frames (a) to ref frames (b).
    """
    if ref_chroma.n_frames != ref_dlnco.n_frames:
        raise LengthMismatch("ref chroma and DLNCO frame counts differ")
    if score_chroma.n_frames != score_dlnco.n_frames:
        raise LengthMismatch("score chroma and DLNCO frame counts differ")
    ref = np.hstack([normalize_frame(ref_chroma.data, "l2"), ref_dlnco.data])
    score = np.hstack([normalize_frame(score_chroma.data, "l2"), score_dlnco.data])
    model = BlockCost(
        (
            (slice(0, 12), "cosine", chroma_weight),
            (slice(12, 24), "euclidean", dlnco_weight),
        )
    )
    return score, ref, model


# -- multi-scale ----------------------------------------------------------------


def _mean_pool(x: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return x
    n = x.shape[0]
    out = np.empty((math.ceil(n / factor), x.shape[1]))
    for i in range(out.shape[0]):
        out[i] = x[i * factor : (i + 1) * factor].mean(axis=0)
    return out


def _band_from_path(
    path: WarpingPath, ratio: int, margin: int, n_fine: int, m_fine: int
) -> tuple[np.ndarray, np.ndarray]:
    """Expand a coarse path into a fine-level band.

    The margin widens the path at the coarse level first (so tight coarse
    grids become full coverage), then everything scales up by ``ratio``.
    """
    pairs = path.pairs
    n_coarse = int(pairs[-1, 0]) + 1
    lo_c = np.full(n_coarse, np.iinfo(np.int64).max, dtype=np.int64)
    hi_c = np.full(n_coarse, -1, dtype=np.int64)
    for a, b in pairs:
        lo_c[a] = min(lo_c[a], b)
        hi_c[a] = max(hi_c[a], b)
    lo_c -= margin
    hi_c += margin
    lo = np.empty(n_fine, dtype=np.int64)
    hi = np.empty(n_fine, dtype=np.int64)
    for a in range(n_fine):
        ca = min(a // ratio, n_coarse - 1)
        lo[a] = lo_c[ca] * ratio
        hi[a] = hi_c[ca] * ratio + ratio - 1
    return np.clip(lo, 0, m_fine - 1), np.clip(hi, 0, m_fine - 1)


def mrms_dtw(
    X,
    Y,
    metric="euclidean",
    levels: Sequence[int] = (32, 8, 1),
    margin: int = 25,
    cfg: DtwConfig = DtwConfig(),
) -> WarpingPath:
    """Memory-restricted multi-scale DTW: coarse-to-fine inside projected bands.

    Features are mean-pooled by each level factor; the coarsest level runs
    unconstrained, each finer level inside the previous path's band widened by
    ``margin`` coarse frames.  An infeasible band is retried once with the
    margin doubled.
    """
    X, Y = _as_array(X), _as_array(Y)
    levels = list(levels)
    if sorted(levels, reverse=True) != levels or levels[-1] != 1:
        raise ConfigError(f"levels must descend to 1, got {levels}")
    if min(X.shape[0], Y.shape[0]) < levels[0]:
        raise EmptyInput(
            f"inputs must be at least {levels[0]} frames for the coarsest level"
        )
    pooled = [(_mean_pool(X, f), _mean_pool(Y, f)) for f in levels]

    path, _ = dtw_full(pooled[0][0], pooled[0][1], metric, cfg)
    for i in range(1, len(levels)):
        ratio = levels[i - 1] // levels[i]
        if ratio * levels[i] != levels[i - 1]:
            raise ConfigError(f"levels must divide evenly, got {levels}")
        xf, yf = pooled[i]
        use_margin = margin
        for attempt in range(2):
            band = _band_from_path(path, ratio, use_margin, xf.shape[0], yf.shape[0])
            try:
                banded_cfg = DtwConfig(cfg.steps, cfg.weights, band)
                path, _ = dtw_full(xf, yf, metric, banded_cfg)
                break
            except BandInfeasible:
                if attempt == 1:
                    raise
                use_margin *= 2
    return path


# -- pseudo-labels ----------------------------------------------------------------


def generate_pseudo_labels(
    timeline: LyricsTimeline,
    score_ref_path: WarpingPath,
    clock: FrameClock = DEFAULT_CLOCK,
) -> LyricsTimeline:
    """Fill ref times on every unit by mapping score times through the path.

    The path aligns score frames (a) to ref frames (b).  Updates the timeline
    in place and returns it; a unit whose score time falls more than half a
    frame beyond the path span raises OutOfRange.
    """
    last_a = float(score_ref_path.pairs[-1, 0])
    units = list(timeline.lines) + list(timeline.iter_words()) + list(
        timeline.iter_notes()
    )
    for unit in units:
        pos = clock.seconds_to_frames(unit.score_time)
        if pos > last_a + 0.5:
            raise OutOfRange(
                f"unit {unit.text!r} at score frame {pos:.1f} beyond path end {last_a}"
            )
        unit.ref_time = clock.frames_to_seconds(score_ref_path.map(min(pos, last_a)))
    return timeline
