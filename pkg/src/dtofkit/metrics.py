"""Depth evaluation metrics and detector scoring."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DataError, DenseDepthMap, EmptyFrameError
from .simulate import LABEL_ERROR


@dataclass(frozen=True)
class EvalReport:
    delta1: float
    delta2: float
    delta3: float
    rel: float      # mean absolute relative error
    rmse: float     # meters
    log10: float    # mean |log10(pred) - log10(gt)|
    ewmae: float    # edge-weighted MAE, meters
    n_pixels: int
    region: str = "all"

    def as_dict(self) -> dict:
        return {
            "delta1": self.delta1, "delta2": self.delta2, "delta3": self.delta3,
            "rel": self.rel, "rmse": self.rmse, "log10": self.log10,
            "ewmae": self.ewmae, "n_pixels": self.n_pixels, "region": self.region,
        }


def _eval_mask(pred: DenseDepthMap, gt: DenseDepthMap,
               mask: Optional[np.ndarray]) -> np.ndarray:
    if pred.values.shape != gt.values.shape:
        raise DataError(f"shape mismatch: pred {pred.values.shape} vs gt {gt.values.shape}")
    m = gt.valid.copy()
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != gt.values.shape:
            raise DataError("mask shape does not match the maps")
        m &= mask
    if not np.any(m):
        raise EmptyFrameError("empty evaluation set")
    if np.any(pred.values[m] <= 0):
        raise DataError("nonpositive prediction inside the evaluation set")
    return m


def ewmae(pred: DenseDepthMap, gt: DenseDepthMap,
          mask: Optional[np.ndarray] = None) -> float:
    """Edge-weighted MAE: per-pixel weight 1 + g/mean(g), where g is the
    ground-truth gradient magnitude (central differences, replicated
    borders) and the mean is over the evaluated set."""
    m = _eval_mask(pred, gt, mask)
    padded = np.pad(gt.values, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    g = np.hypot(gx, gy)[m]
    mean_g = g.mean()
    weights = np.ones_like(g) if mean_g == 0 else 1.0 + g / mean_g
    abs_err = np.abs(pred.values[m] - gt.values[m])
    return float((weights * abs_err).sum() / weights.sum())


def evaluate(pred: DenseDepthMap, gt: DenseDepthMap,
             mask: Optional[np.ndarray] = None, region: str = "all") -> EvalReport:
    """Standard depth metrics over valid GT pixels intersected with mask."""
    m = _eval_mask(pred, gt, mask)
    y = pred.values[m]
    t = gt.values[m]
    ratio = np.maximum(y / t, t / y)
    deltas = [float(np.mean(ratio < 1.25 ** i)) for i in (1, 2, 3)]
    rel = float(np.mean(np.abs(y - t) / t))
    rmse = float(np.sqrt(np.mean((y - t) ** 2)))
    log10 = float(np.mean(np.abs(np.log10(y) - np.log10(t))))
    return EvalReport(deltas[0], deltas[1], deltas[2], rel, rmse, log10,
                      ewmae(pred, gt, mask), int(m.sum()), region)


def detector_prf(flagged: np.ndarray, labels: np.ndarray) -> tuple[float, float, float]:
    """Precision/recall/F1 of the detector against simulator labels.

    Positives are points labeled "error"; "shifted" counts as negative.
    Conventions: precision = 1 when nothing is flagged, recall = 1 when
    there are no positives.
    """
    flagged = np.asarray(flagged, dtype=bool)
    labels = np.asarray(labels)
    if flagged.shape != labels.shape:
        raise DataError("flagged and labels must have equal length")
    positives = labels == LABEL_ERROR
    tp = int(np.sum(flagged & positives))
    n_flagged = int(flagged.sum())
    n_pos = int(positives.sum())
    precision = tp / n_flagged if n_flagged else 1.0
    recall = tp / n_pos if n_pos else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1
