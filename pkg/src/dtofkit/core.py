"""Shared domain types: depth maps, sparse point sets, sensor geometry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple

import numpy as np


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class DataError(ToolkitError):
    """Malformed or inconsistent input data."""


class EmptyFrameError(ToolkitError):
    """A frame contains no usable depth points or pixels."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.asarray(arr)
    out = out.copy() if not out.flags.owndata else out
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DenseDepthMap:
    """H x W metric depth grid with a validity mask. Invalid pixels hold 0."""

    values: np.ndarray  # (H, W) float, meters
    valid: np.ndarray   # (H, W) bool

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"depth map must be 2-D with positive size, got shape {values.shape}")
        if valid.shape != values.shape:
            raise DataError(f"mask shape {valid.shape} does not match values shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("depth map contains non-finite values")
        if np.any(values[valid] <= 0):
            raise DataError("valid pixels must have strictly positive depth")
        if np.any(values[~valid] != 0):
            raise DataError("invalid pixels must hold the 0 sentinel")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "valid", _readonly(valid))

    @classmethod
    def from_values(cls, values: np.ndarray) -> "DenseDepthMap":
        """Build a map where every positive pixel is valid."""
        values = np.asarray(values, dtype=np.float64)
        valid = values > 0
        return cls(np.where(valid, values, 0.0), valid)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


DEPTH_LIKE = "depth"
INVERSE_DEPTH = "inverse"


@dataclass(frozen=True)
class RelativeDepthMap:
    """Unitless relative depth grid from an external monocular estimator.

    orientation "depth" means larger value = farther; "inverse" means
    larger value = nearer.
    """

    values: np.ndarray
    orientation: str = DEPTH_LIKE

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"relative map must be 2-D with positive size, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("relative map contains non-finite values")
        if np.any(values < 0):
            raise DataError("relative map values must be >= 0")
        if self.orientation not in (DEPTH_LIKE, INVERSE_DEPTH):
            raise DataError(f"unknown orientation {self.orientation!r}")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DepthPoint:
    """One sparse sensor point with its paired relative depth sample."""

    row: int
    col: int
    depth: float           # meters, from the sensor
    rel: float             # unitless, depth-like orientation (NaN if unpaired)
    p: Tuple[float, float]  # normalized image coordinate (x, y) in [0,1]^2


def normalize_coords(row: int, col: int, height: int, width: int) -> Tuple[float, float]:
    """Map a pixel index to a normalized image coordinate (x=col/width, y=row/height)."""
    if not (0 <= row < height and 0 <= col < width):
        raise DataError(f"pixel ({row}, {col}) out of bounds for {height}x{width}")
    return (col / width, row / height)


@dataclass(frozen=True)
class SparsePointSet:
    """Ordered sparse depth points; row-major by (row, col), no duplicates.

    rel is NaN for points not yet paired with a relative-depth map.
    """

    rows: np.ndarray         # (N,) int
    cols: np.ndarray         # (N,) int
    depths: np.ndarray       # (N,) float, meters
    source_height: int
    source_width: int
    rels: np.ndarray = field(default=None)  # (N,) float, depth-like; NaN if unpaired

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        cols = np.asarray(self.cols, dtype=np.int64)
        depths = np.asarray(self.depths, dtype=np.float64)
        if not (rows.shape == cols.shape == depths.shape) or rows.ndim != 1:
            raise DataError("rows, cols and depths must be 1-D arrays of equal length")
        if self.source_height < 1 or self.source_width < 1:
            raise DataError("source dimensions must be >= 1")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.source_height:
                raise DataError("point row index out of bounds")
            if cols.min() < 0 or cols.max() >= self.source_width:
                raise DataError("point col index out of bounds")
            if np.any(depths <= 0) or not np.all(np.isfinite(depths)):
                raise DataError("point depths must be finite and > 0")
        rels = self.rels
        if rels is None:
            rels = np.full(rows.shape, np.nan)
        else:
            rels = np.asarray(rels, dtype=np.float64)
            if rels.shape != rows.shape:
                raise DataError("rels must match point count")
            paired = ~np.isnan(rels)
            if np.any(rels[paired] < 0):
                raise DataError("relative depths must be >= 0")
        key = rows * self.source_width + cols
        if rows.size and np.any(np.diff(key) <= 0):
            raise DataError("points must be sorted row-major with no duplicate (row, col)")
        object.__setattr__(self, "rows", _readonly(rows))
        object.__setattr__(self, "cols", _readonly(cols))
        object.__setattr__(self, "depths", _readonly(depths))
        object.__setattr__(self, "rels", _readonly(rels))

    @classmethod
    def build(cls, rows, cols, depths, source_height, source_width, rels=None):
        """Sort inputs row-major and construct; rejects duplicate coordinates."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        depths = np.asarray(depths, dtype=np.float64)
        key = rows * source_width + cols
        if len(np.unique(key)) != len(key):
            raise DataError("duplicate (row, col) coordinates")
        order = np.argsort(key, kind="stable")
        rels = None if rels is None else np.asarray(rels, dtype=np.float64)[order]
        return cls(rows[order], cols[order], depths[order],
                   source_height, source_width, rels)

    def __len__(self) -> int:
        return int(self.rows.size)

    def __iter__(self) -> Iterator[DepthPoint]:
        for i in range(len(self)):
            yield self.point(i)

    def point(self, i: int) -> DepthPoint:
        return DepthPoint(
            row=int(self.rows[i]),
            col=int(self.cols[i]),
            depth=float(self.depths[i]),
            rel=float(self.rels[i]),
            p=normalize_coords(int(self.rows[i]), int(self.cols[i]),
                               self.source_height, self.source_width),
        )

    def normalized_coords(self) -> np.ndarray:
        """(N, 2) array of (x, y) normalized coordinates."""
        return np.column_stack((self.cols / self.source_width,
                                self.rows / self.source_height))

    def take(self, mask_or_index) -> "SparsePointSet":
        """Subset keeping order; accepts a boolean mask or index array."""
        idx = np.asarray(mask_or_index)
        return SparsePointSet(self.rows[idx], self.cols[idx], self.depths[idx],
                              self.source_height, self.source_width, self.rels[idx])


@dataclass(frozen=True)
class SensorSpec:
    """Lightweight dToF sensor geometry and corruption rates."""

    dtof_rows: int = 30
    dtof_cols: int = 40
    fov_fraction: float = 1.0       # fraction of the image covered per axis
    d_min: float = 0.3              # meters, theoretical detection range
    d_max: float = 10.0
    noise_rate: float = 0.05
    blank_rate: float = 0.05
    background_percentile: float = 70.0
    max_shift_dtof_px: float = 2.0  # calibration shift bound, dToF pixel units

    def __post_init__(self):
        if self.dtof_rows * self.dtof_cols < 1:
            raise DataError("sensor grid must contain at least one cell")
        if not (0 < self.fov_fraction <= 1):
            raise DataError("fov_fraction must be in (0, 1]")
        if not (0 < self.d_min < self.d_max):
            raise DataError("require 0 < d_min < d_max")
        if not (0 <= self.noise_rate <= 1 and 0 <= self.blank_rate <= 1):
            raise DataError("noise_rate and blank_rate must be in [0, 1]")
        if self.noise_rate + self.blank_rate > 1:
            raise DataError("noise_rate + blank_rate must be <= 1")
        if not (0 < self.background_percentile < 100):
            raise DataError("background_percentile must be in (0, 100)")
        if self.max_shift_dtof_px < 0:
            raise DataError("max_shift_dtof_px must be >= 0")


REL_EPS = 1e-6  # guard when converting inverse depth to depth-like


def pair_points(pts: SparsePointSet, rel: RelativeDepthMap) -> SparsePointSet:
    """Attach a relative-depth sample to every sensor point.

    Inverse-oriented maps are converted to depth-like via r = 1/(v + eps),
    so that larger r always means farther.
    """
    if len(pts):
        oob = (pts.rows >= rel.height) | (pts.cols >= rel.width)
        if np.any(oob):
            i = int(np.argmax(oob))
            raise DataError(
                f"point {i} at ({int(pts.rows[i])}, {int(pts.cols[i])}) "
                f"lies outside the {rel.height}x{rel.width} relative map")
    samples = rel.values[pts.rows, pts.cols]
    if rel.orientation == INVERSE_DEPTH:
        samples = 1.0 / (samples + REL_EPS)
    return SparsePointSet(pts.rows, pts.cols, pts.depths,
                          pts.source_height, pts.source_width, samples)
