"""Parameter-free anomaly detection for sparse depth points.

Each point is scored by (a) the disagreement between its global depth
ranking under the sensor depths and under the paired relative depths, and
(b) a spatially-weighted inconsistency of scale-invariant pairwise depth
differences. The two scores are summed and thresholded adaptively: a
frame-level Spearman coefficient between sensor and relative depths
selects between "trust everything", a blend of a percentile threshold
with Otsu's threshold, and plain Otsu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from .core import DataError, EmptyFrameError, SparsePointSet

THRESHOLD_ADAPTIVE = "adaptive"
THRESHOLD_OTSU = "otsu"  # ablation mode: always use the raw Otsu threshold


@dataclass(frozen=True)
class DetectorConfig:
    rank_smoothing: float = 0.5     # tanh smoothing of the rank disagreement
    spatial_decay: float = 15.0     # exp decay of pairwise spatial weights
    eps: float = 1e-6               # division guard in the scale-invariant diffs
    score_percentile: float = 0.04  # fraction of points for the statistical threshold
    blend_steepness: float = 40.0   # sigmoid steepness of the blend weight
    blend_center: float = 0.9       # sigmoid center of the blend weight
    reliability_hi: float = 0.95    # Spearman above this: trust all points
    reliability_lo: float = 0.85    # Spearman at or below this: raw Otsu
    otsu_bins: int = 256
    threshold_mode: str = THRESHOLD_ADAPTIVE

    def __post_init__(self):
        if self.rank_smoothing <= 0 or self.spatial_decay < 0 or self.eps <= 0:
            raise DataError("rank_smoothing > 0, spatial_decay >= 0, eps > 0 required")
        if not (0 < self.score_percentile < 1) or self.blend_steepness <= 0:
            raise DataError("score_percentile in (0,1) and blend_steepness > 0 required")
        if not (0 < self.reliability_lo < self.reliability_hi < 1):
            raise DataError("require 0 < reliability_lo < reliability_hi < 1")
        if self.otsu_bins < 2:
            raise DataError("otsu_bins must be >= 2")
        if self.threshold_mode not in (THRESHOLD_ADAPTIVE, THRESHOLD_OTSU):
            raise DataError(f"unknown threshold mode {self.threshold_mode!r}")


@dataclass(frozen=True)
class AnomalyResult:
    rank_scores: np.ndarray    # per-point global rank inconsistency, in [0, 1)
    region_scores: np.ndarray  # per-point region inconsistency, >= 0
    total_scores: np.ndarray   # rank + region
    spearman: float            # frame-level reliability, in [-1, 1]
    otsu_threshold: float
    stat_threshold: float      # percentile threshold; +inf when floor(p*N) = 0
    threshold: float           # final threshold; +inf disables flagging
    inlier: np.ndarray         # True = kept; flagged points have score > threshold

    @property
    def flagged(self) -> np.ndarray:
        return ~self.inlier


def _require_points(pts: SparsePointSet) -> int:
    n = len(pts)
    if n == 0:
        raise EmptyFrameError("detector requires at least one point")
    if np.any(np.isnan(pts.rels)):
        raise DataError("points must be paired with relative depth before detection")
    return n


def global_rank_scores(pts: SparsePointSet, cfg: DetectorConfig) -> np.ndarray:
    """Disagreement between each point's rank position under sensor depth
    and under relative depth, squashed through tanh.

    The signed rank sum sum_j sgn(x_i - x_j) equals 2*rank_i - N - 1 with
    average ranks, which this uses for an O(N log N) exact evaluation.
    """
    n = _require_points(pts)
    rank_abs = (2.0 * rankdata(pts.depths, method="average") - n - 1) / n
    rank_rel = (2.0 * rankdata(pts.rels, method="average") - n - 1) / n
    return np.tanh(np.abs(rank_abs - rank_rel) / cfg.rank_smoothing)


def region_similarity_scores(pts: SparsePointSet, cfg: DetectorConfig) -> np.ndarray:
    """Mean spatially-weighted mismatch of scale-invariant pairwise depth
    differences between the sensor and the relative map."""
    n = _require_points(pts)
    d = pts.depths
    r = pts.rels
    v_abs = np.abs(d[:, None] - d[None, :]) / (d[:, None] + d[None, :] + cfg.eps)
    v_rel = np.abs(r[:, None] - r[None, :]) / (r[:, None] + r[None, :] + cfg.eps)
    p = pts.normalized_coords()
    w = np.exp(-cfg.spatial_decay * cdist(p, p))
    np.abs(v_abs - v_rel, out=v_abs)
    v_abs *= w
    return v_abs.sum(axis=1) / n


def spearman(pts: SparsePointSet) -> float:
    """Spearman rank correlation between sensor and relative depths,
    average ranks for ties. Fewer than 2 points (or a constant series)
    counts as trivially consistent: 1."""
    n = len(pts)
    if n < 2:
        return 1.0
    ra = rankdata(pts.depths, method="average")
    rb = rankdata(pts.rels, method="average")
    da = ra - ra.mean()
    db = rb - rb.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0:
        return 1.0
    return float(np.clip((da @ db) / denom, -1.0, 1.0))


def otsu_threshold(scores: np.ndarray, cfg: DetectorConfig) -> float:
    """Histogram threshold over [min, max] maximizing between-class
    variance; ties resolve to the lower edge. Degenerate input returns
    its maximum (nothing exceeds it)."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise EmptyFrameError("cannot threshold an empty score array")
    lo, hi = float(scores.min()), float(scores.max())
    if lo == hi:
        return hi
    counts, edges = np.histogram(scores, bins=cfg.otsu_bins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(counts)[:-1]                   # class sizes below edge k+1
    w1 = scores.size - w0
    mass = np.cumsum(counts * centers)[:-1]
    total = float(np.sum(counts * centers))
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = np.where(w0 > 0, mass / w0, 0.0)
        mu1 = np.where(w1 > 0, (total - mass) / w1, 0.0)
    var_between = w0 * w1 * (mu0 - mu1) ** 2
    best = int(np.argmax(var_between))            # argmax takes the first = lowest edge
    return float(edges[best + 1])


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def adaptive_threshold(scores: np.ndarray, gamma: float,
                       cfg: DetectorConfig) -> tuple[float, float]:
    """Final threshold as a piecewise function of the reliability gamma.

    Returns (stat_threshold, threshold). The statistical threshold is the
    m-th largest score with m = floor(score_percentile * N); +inf when
    m = 0, which propagates through the blend (conservative at small N).
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if n == 0:
        raise EmptyFrameError("cannot threshold an empty score array")
    m = int(math.floor(cfg.score_percentile * n))
    if m >= 1:
        t_stat = float(np.sort(scores)[::-1][m - 1])
    else:
        t_stat = math.inf
    t_otsu = otsu_threshold(scores, cfg)

    if cfg.threshold_mode == THRESHOLD_OTSU:
        return t_stat, t_otsu
    if gamma > cfg.reliability_hi:
        return t_stat, math.inf
    if gamma > cfg.reliability_lo:
        w = _sigmoid(cfg.blend_steepness * (gamma - cfg.blend_center))
        return t_stat, w * t_stat + (1.0 - w) * t_otsu
    return t_stat, t_otsu


def detect(pts: SparsePointSet, cfg: DetectorConfig = DetectorConfig()) -> AnomalyResult:
    """Score every point and flag those whose total score exceeds the
    adaptive threshold. Returns all intermediates for inspection."""
    _require_points(pts)
    g = global_rank_scores(pts, cfg)
    s = region_similarity_scores(pts, cfg)
    a = s + g
    gamma = spearman(pts)
    t_otsu = otsu_threshold(a, cfg)
    t_stat, t = adaptive_threshold(a, gamma, cfg)
    inlier = a <= t
    return AnomalyResult(g, s, a, gamma, t_otsu, t_stat, t, inlier)


def mask_points(pts: SparsePointSet, result: AnomalyResult) -> SparsePointSet:
    """Keep only inlier points, order preserved."""
    if result.inlier.shape[0] != len(pts):
        raise DataError("detection result does not match the point set size")
    return pts.take(result.inlier)
