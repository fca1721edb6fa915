"""Sparse dToF measurement simulation from dense ground-truth depth.

Four corruption stages applied in order: grid sampling, region anomalies
(absence / error blobs), calibration shift of background points, and
independent random noise / blank points. Every stage is deterministic
given (ground truth, config): stage k draws from a generator seeded with
(config.seed, k), so the stages are individually pure and the composition
is reproducible bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

from .core import DataError, DenseDepthMap, EmptyFrameError, SensorSpec, SparsePointSet

LABEL_CLEAN = "clean"
LABEL_ERROR = "error"
LABEL_SHIFTED = "shifted"

ERROR_POLICY_UNIFORM = "uniform"    # redraw in [d_min, d_max]
ERROR_POLICY_MULTIPLY = "multiply"  # scale by a random factor in [1.5, 3]


@dataclass(frozen=True)
class SimConfig:
    spec: SensorSpec = field(default_factory=SensorSpec)
    seed: int = 0
    region_count_range: Tuple[int, int] = (1, 3)
    region_area_range: Tuple[float, float] = (0.02, 0.15)  # fraction of FoV cells
    region_absence_prob: float = 0.5   # remaining probability -> error blob
    error_policy: str = ERROR_POLICY_UNIFORM
    jitter: float = 0.25               # per-cell jitter, fraction of one cell

    def __post_init__(self):
        lo, hi = self.region_count_range
        if lo < 0 or hi < lo:
            raise DataError("region_count_range must satisfy 0 <= min <= max")
        alo, ahi = self.region_area_range
        if not (0 < alo <= ahi <= 0.5):
            raise DataError("region_area_range must lie within (0, 0.5]")
        if not (0 <= self.region_absence_prob <= 1):
            raise DataError("region_absence_prob must be in [0, 1]")
        if self.error_policy not in (ERROR_POLICY_UNIFORM, ERROR_POLICY_MULTIPLY):
            raise DataError(f"unknown error policy {self.error_policy!r}")
        if not (0 <= self.jitter <= 0.5):
            raise DataError("jitter must be in [0, 0.5] cells")


@dataclass(frozen=True)
class SimOutput:
    """Simulated frame: surviving points, per-point labels, dropped cells."""

    points: SparsePointSet
    labels: np.ndarray            # (N,) str in {clean, error, shifted}
    cells: np.ndarray             # (N, 2) originating dToF cell (i, j) per point
    dropped: np.ndarray           # (M, 2) dToF cells with no return
    fov_rect: Tuple[float, float, float, float]  # (top, left, height, width), image px
    calibration_shift: Tuple[float, float] = (0.0, 0.0)  # applied (dx, dy), dToF cells

    def __post_init__(self):
        if self.labels.shape[0] != len(self.points):
            raise DataError("labels must align with points")
        if self.cells.shape[0] != len(self.points):
            raise DataError("cells must align with points")


def _stage_rng(cfg: SimConfig, stage: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, stage])


def _lattice(gt: DenseDepthMap, spec: SensorSpec):
    fov_h = gt.height * spec.fov_fraction
    fov_w = gt.width * spec.fov_fraction
    top = (gt.height - fov_h) / 2.0
    left = (gt.width - fov_w) / 2.0
    cell_h = fov_h / spec.dtof_rows
    cell_w = fov_w / spec.dtof_cols
    return top, left, cell_h, cell_w


def sample_grid(gt: DenseDepthMap, cfg: SimConfig) -> SimOutput:
    """Sample one candidate point per dToF cell from the ground truth.

    The whole sampling lattice gets a random sub-cell translation and a
    rotation of at most 1 degree; each cell additionally jitters its sample
    around the (transformed) cell center. Cells landing outside the image
    or on invalid ground truth are recorded as dropped.
    """
    spec = cfg.spec
    rng = _stage_rng(cfg, 0)
    top, left, cell_h, cell_w = _lattice(gt, spec)

    theta = rng.uniform(-1.0, 1.0) * math.pi / 180.0
    tx, ty = rng.uniform(-0.5, 0.5, size=2)  # cells
    n_cells = spec.dtof_rows * spec.dtof_cols
    jit = rng.uniform(-cfg.jitter, cfg.jitter, size=(n_cells, 2))

    jj, ii = np.meshgrid(np.arange(spec.dtof_cols), np.arange(spec.dtof_rows))
    ii = ii.ravel()
    jj = jj.ravel()
    # cell-unit coordinates of each sample before the global transform
    cx = jj + 0.5 + tx + jit[:, 0]
    cy = ii + 0.5 + ty + jit[:, 1]

    # rotate about the lattice center, then map cell units to image pixels
    ccx, ccy = spec.dtof_cols / 2.0, spec.dtof_rows / 2.0
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    rx = ccx + (cx - ccx) * cos_t - (cy - ccy) * sin_t
    ry = ccy + (cx - ccx) * sin_t + (cy - ccy) * cos_t
    px = left + rx * cell_w
    py = top + ry * cell_h

    col = np.floor(px).astype(np.int64)
    row = np.floor(py).astype(np.int64)
    inside = (row >= 0) & (row < gt.height) & (col >= 0) & (col < gt.width)
    usable = inside.copy()
    usable[inside] &= gt.valid[row[inside], col[inside]]

    # duplicate pixels can only arise at cell borders; keep the first cell
    key = np.where(usable, row * gt.width + col, -1)
    seen = set()
    for idx in np.flatnonzero(usable):
        if key[idx] in seen:
            usable[idx] = False
        else:
            seen.add(key[idx])

    if not np.any(usable):
        raise EmptyFrameError("no dToF cell overlaps valid ground truth")

    # fov_rect: bounding box of the transformed lattice, clipped to the image
    corners_x = np.array([0.0, spec.dtof_cols, 0.0, spec.dtof_cols])
    corners_y = np.array([0.0, 0.0, spec.dtof_rows, spec.dtof_rows])
    gx = ccx + (corners_x - ccx) * cos_t - (corners_y - ccy) * sin_t
    gy = ccy + (corners_x - ccx) * sin_t + (corners_y - ccy) * cos_t
    # pad by the largest possible rotated (translation + jitter) offset
    pad = math.hypot(abs(tx) + cfg.jitter, abs(ty) + cfg.jitter)
    bx0 = max(0.0, left + (gx.min() - pad) * cell_w)
    by0 = max(0.0, top + (gy.min() - pad) * cell_h)
    bx1 = min(float(gt.width), left + (gx.max() + pad) * cell_w)
    by1 = min(float(gt.height), top + (gy.max() + pad) * cell_h)
    fov_rect = (by0, bx0, by1 - by0, bx1 - bx0)

    row_u, col_u = row[usable], col[usable]
    cells_u = np.column_stack((ii[usable], jj[usable]))
    depths_u = gt.values[row_u, col_u]
    dropped = np.column_stack((ii[~usable], jj[~usable]))

    order = np.argsort(row_u * gt.width + col_u, kind="stable")
    pts = SparsePointSet(row_u[order], col_u[order], depths_u[order],
                         gt.height, gt.width)
    labels = np.full(len(pts), LABEL_CLEAN, dtype=object)
    return SimOutput(pts, labels, cells_u[order], dropped, fov_rect)


def _rasterize_blob(rng: np.random.Generator, rows: int, cols: int,
                    target_cells: float) -> np.ndarray:
    """Irregular blob mask over the dToF grid: union of 2-5 random ellipses,
    iteratively rescaled toward the target cell count."""
    n_ell = int(rng.integers(2, 6))
    bc_i = rng.uniform(0, rows)
    bc_j = rng.uniform(0, cols)
    base_r = math.sqrt(max(target_cells, 1.0) / math.pi)
    centers = np.column_stack((
        bc_i + rng.uniform(-base_r, base_r, n_ell),
        bc_j + rng.uniform(-base_r, base_r, n_ell),
    ))
    axes = base_r * rng.uniform(0.5, 1.2, size=(n_ell, 2))
    angles = rng.uniform(0, math.pi, n_ell)

    jg, ig = np.meshgrid(np.arange(cols) + 0.5, np.arange(rows) + 0.5)
    scale = 1.0
    mask = np.zeros((rows, cols), dtype=bool)
    for _ in range(4):
        mask[:] = False
        for e in range(n_ell):
            di = ig - centers[e, 0]
            dj = jg - centers[e, 1]
            ca, sa = math.cos(angles[e]), math.sin(angles[e])
            u = di * ca + dj * sa
            v = -di * sa + dj * ca
            a, b = axes[e] * scale
            mask |= (u / max(a, 1e-9)) ** 2 + (v / max(b, 1e-9)) ** 2 <= 1.0
        area = mask.sum()
        if area == 0:
            scale *= 1.5
            continue
        ratio = target_cells / area
        if 0.75 <= ratio <= 1.3:
            break
        scale *= math.sqrt(ratio)

    # trim or grow to the exact target count, farthest-from-centroid first
    target = max(1, int(round(target_cells)))
    on = np.argwhere(mask)
    if on.size == 0:
        return mask
    centroid = on.mean(axis=0)
    if on.shape[0] > target:
        dist = np.hypot(on[:, 0] - centroid[0], on[:, 1] - centroid[1])
        drop = on[np.argsort(dist, kind="stable")[target:]]
        mask[drop[:, 0], drop[:, 1]] = False
    elif on.shape[0] < target:
        off = np.argwhere(~mask)
        dist = np.hypot(off[:, 0] - centroid[0], off[:, 1] - centroid[1])
        add = off[np.argsort(dist, kind="stable")[:target - on.shape[0]]]
        mask[add[:, 0], add[:, 1]] = True
    return mask


def inject_region_anomalies(sim: SimOutput, gt: DenseDepthMap,
                            cfg: SimConfig) -> SimOutput:
    """Draw irregular blobs in dToF-cell space; each becomes an absence
    region (points removed) or an error region (depths replaced)."""
    spec = cfg.spec
    rng = _stage_rng(cfg, 1)
    lo, hi = cfg.region_count_range
    k = int(rng.integers(lo, hi + 1))
    if k == 0:
        return sim

    n_cells = spec.dtof_rows * spec.dtof_cols
    labels = sim.labels.copy()
    depths = sim.points.depths.copy()
    keep = np.ones(len(sim.points), dtype=bool)
    dropped = [tuple(c) for c in sim.dropped]

    for _ in range(k):
        frac = rng.uniform(*cfg.region_area_range)
        mask = _rasterize_blob(rng, spec.dtof_rows, spec.dtof_cols, frac * n_cells)
        absence = rng.random() < cfg.region_absence_prob
        in_blob = mask[sim.cells[:, 0], sim.cells[:, 1]] & keep
        if absence:
            for c in sim.cells[in_blob]:
                dropped.append((int(c[0]), int(c[1])))
            keep &= ~in_blob
        else:
            idx = np.flatnonzero(in_blob)
            if cfg.error_policy == ERROR_POLICY_UNIFORM:
                depths[idx] = rng.uniform(spec.d_min, spec.d_max, size=idx.size)
            else:
                factors = rng.uniform(1.5, 3.0, size=idx.size)
                depths[idx] = np.minimum(depths[idx] * factors, spec.d_max)
            labels[idx] = LABEL_ERROR

    pts = SparsePointSet(sim.points.rows[keep], sim.points.cols[keep],
                         depths[keep], sim.points.source_height,
                         sim.points.source_width, sim.points.rels[keep])
    return SimOutput(pts, labels[keep], sim.cells[keep],
                     np.array(dropped, dtype=np.int64).reshape(-1, 2), sim.fov_rect,
                     sim.calibration_shift)


def inject_calibration_error(sim: SimOutput, gt: DenseDepthMap,
                             cfg: SimConfig) -> SimOutput:
    """Shift background points (depth above a ground-truth percentile) by a
    single per-frame random vector of at most max_shift_dtof_px cells."""
    spec = cfg.spec
    rng = _stage_rng(cfg, 2)
    if spec.max_shift_dtof_px == 0 or len(sim.points) == 0:
        return sim

    top, left, cell_h, cell_w = _lattice(gt, spec)
    fy, fx, fh, fw = sim.fov_rect
    r0, r1 = int(math.floor(fy)), int(math.ceil(fy + fh))
    c0, c1 = int(math.floor(fx)), int(math.ceil(fx + fw))
    sub_vals = gt.values[r0:r1, c0:c1]
    sub_valid = gt.valid[r0:r1, c0:c1]
    if not np.any(sub_valid):
        return sim
    tau = float(np.percentile(sub_vals[sub_valid], spec.background_percentile))

    magnitude = rng.uniform(0, spec.max_shift_dtof_px)
    angle = rng.uniform(0, 2 * math.pi)
    shift_cells = (magnitude * math.cos(angle), magnitude * math.sin(angle))
    dx = shift_cells[0] * cell_w
    dy = shift_cells[1] * cell_h

    target = (sim.labels == LABEL_CLEAN) & (sim.points.depths > tau)
    if not np.any(target):
        return replace(sim, calibration_shift=shift_cells)

    new_row = np.round(sim.points.rows + dy).astype(np.int64)
    new_col = np.round(sim.points.cols + dx).astype(np.int64)
    ok = (new_row >= 0) & (new_row < gt.height) & (new_col >= 0) & (new_col < gt.width)
    ok[ok] &= gt.valid[new_row[ok], new_col[ok]]

    depths = sim.points.depths.copy()
    labels = sim.labels.copy()
    keep = np.ones(len(sim.points), dtype=bool)
    shifted = target & ok
    depths[shifted] = gt.values[new_row[shifted], new_col[shifted]]
    labels[shifted] = LABEL_SHIFTED
    lost = target & ~ok
    keep &= ~lost

    dropped = [tuple(c) for c in sim.dropped]
    for c in sim.cells[lost]:
        dropped.append((int(c[0]), int(c[1])))

    pts = SparsePointSet(sim.points.rows[keep], sim.points.cols[keep],
                         depths[keep], sim.points.source_height,
                         sim.points.source_width, sim.points.rels[keep])
    return SimOutput(pts, labels[keep], sim.cells[keep],
                     np.array(dropped, dtype=np.int64).reshape(-1, 2), sim.fov_rect,
                     shift_cells)


def inject_random_noise(sim: SimOutput, cfg: SimConfig) -> SimOutput:
    """Independently turn surviving points into noise (uniform redraw in the
    detection range) or blanks (removed)."""
    spec = cfg.spec
    rng = _stage_rng(cfg, 3)
    n = len(sim.points)
    if n == 0 or (spec.noise_rate == 0 and spec.blank_rate == 0):
        return sim

    u = rng.random(n)
    noisy = u < spec.noise_rate
    blank = (~noisy) & (u < spec.noise_rate + spec.blank_rate)

    depths = sim.points.depths.copy()
    labels = sim.labels.copy()
    depths[noisy] = rng.uniform(spec.d_min, spec.d_max, size=int(noisy.sum()))
    labels[noisy] = LABEL_ERROR

    keep = ~blank
    dropped = [tuple(c) for c in sim.dropped]
    for c in sim.cells[blank]:
        dropped.append((int(c[0]), int(c[1])))

    pts = SparsePointSet(sim.points.rows[keep], sim.points.cols[keep],
                         depths[keep], sim.points.source_height,
                         sim.points.source_width, sim.points.rels[keep])
    return SimOutput(pts, labels[keep], sim.cells[keep],
                     np.array(dropped, dtype=np.int64).reshape(-1, 2), sim.fov_rect,
                     sim.calibration_shift)


def simulate(gt: DenseDepthMap, cfg: SimConfig) -> SimOutput:
    """Full simulation: sampling, region anomalies, calibration shift, noise."""
    sim = sample_grid(gt, cfg)
    sim = inject_region_anomalies(sim, gt, cfg)
    sim = inject_calibration_error(sim, gt, cfg)
    sim = inject_random_noise(sim, cfg)
    return sim
