"""File codecs: dense depth (float map / 16-bit PNG), point CSVs,
run configuration, reports and color renders."""

from __future__ import annotations

import csv
import importlib.resources
import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from PIL import Image

from .anomaly import DetectorConfig
from .core import DataError, DenseDepthMap, SensorSpec, SparsePointSet
from .simulate import LABEL_CLEAN, LABEL_ERROR, LABEL_SHIFTED, SimConfig


class FormatError(DataError):
    """Malformed file content."""


# ---------------------------------------------------------------- dense depth

_PFM_HEADER_GRAY = b"Pf"
_PFM_HEADER_COLOR = b"PF"
_MM_PER_M = 1000.0


def _read_pfm(path: Path) -> DenseDepthMap:
    with open(path, "rb") as f:
        magic = f.readline().strip()
        if magic == _PFM_HEADER_COLOR:
            raise FormatError(f"{path}: 3-channel float maps are not supported")
        if magic != _PFM_HEADER_GRAY:
            raise FormatError(f"{path}: bad float-map magic {magic!r}")
        dims = f.readline().split()
        if len(dims) != 2:
            raise FormatError(f"{path}: malformed dimensions line")
        try:
            width, height = int(dims[0]), int(dims[1])
            scale = float(f.readline().strip())
        except ValueError as e:
            raise FormatError(f"{path}: malformed header: {e}") from None
        endian = "<" if scale < 0 else ">"
        payload = f.read(4 * width * height)
        if len(payload) != 4 * width * height:
            raise FormatError(f"{path}: truncated payload "
                              f"({len(payload)} of {4 * width * height} bytes)")
        data = np.frombuffer(payload, dtype=endian + "f4").reshape(height, width)
        data = np.flipud(data).astype(np.float64)  # stored bottom-to-top
    return DenseDepthMap.from_values(data)


def _write_pfm(depth: DenseDepthMap, path: Path) -> None:
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{depth.width} {depth.height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        data = np.flipud(np.where(depth.valid, depth.values, 0.0)).astype("<f4")
        f.write(data.tobytes())


def _read_depth_png(path: Path) -> DenseDepthMap:
    with Image.open(path) as img:
        if img.mode not in ("I", "I;16", "I;16B"):
            raise FormatError(f"{path}: expected 16-bit grayscale PNG, got mode {img.mode}")
        data = np.asarray(img, dtype=np.float64)
    return DenseDepthMap.from_values(data / _MM_PER_M)


def _write_depth_png(depth: DenseDepthMap, path: Path) -> None:
    mm = np.round(np.where(depth.valid, depth.values, 0.0) * _MM_PER_M)
    if np.any(mm > 65535):
        raise DataError("depth exceeds the 65.535 m range of 16-bit millimeter PNGs")
    img = Image.fromarray(mm.astype(np.uint16))
    img.save(path, format="PNG")


def read_dense_depth(path) -> DenseDepthMap:
    """Read a depth map; format selected by extension (.pfm or .png)."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return _read_pfm(path)
    if path.suffix.lower() == ".png":
        return _read_depth_png(path)
    raise FormatError(f"{path}: unsupported depth extension {path.suffix!r}")


def write_dense_depth(depth: DenseDepthMap, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        _write_pfm(depth, path)
    elif path.suffix.lower() == ".png":
        _write_depth_png(depth, path)
    else:
        raise FormatError(f"{path}: unsupported depth extension {path.suffix!r}")


# --------------------------------------------------------------------- points

_VALID_LABELS = {LABEL_CLEAN, LABEL_ERROR, LABEL_SHIFTED}


def write_points(pts: SparsePointSet, path, labels: Optional[np.ndarray] = None) -> None:
    """CSV with header row,col,depth_m[,label], rows sorted row-major."""
    path = Path(path)
    if labels is not None and len(labels) != len(pts):
        raise DataError("labels must match point count")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["row", "col", "depth_m"] + (["label"] if labels is not None else [])
        writer.writerow(header)
        for i in range(len(pts)):
            rec = [int(pts.rows[i]), int(pts.cols[i]), f"{pts.depths[i]:.9g}"]
            if labels is not None:
                rec.append(str(labels[i]))
            writer.writerow(rec)


def read_points(path, source_height: int, source_width: int):
    """Read a point CSV; returns (SparsePointSet, labels-or-None)."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        if header[:3] != ["row", "col", "depth_m"]:
            raise FormatError(f"{path}: bad header {header!r}")
        with_labels = header == ["row", "col", "depth_m", "label"]
        if not with_labels and header != ["row", "col", "depth_m"]:
            raise FormatError(f"{path}: bad header {header!r}")
        rows, cols, depths, labels = [], [], [], []
        seen = {}
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise FormatError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                r, c, d = int(rec[0]), int(rec[1]), float(rec[2])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric field") from None
            if (r, c) in seen:
                raise FormatError(f"{path}:{lineno}: duplicate coordinate ({r}, {c}), "
                                  f"first seen on line {seen[(r, c)]}")
            seen[(r, c)] = lineno
            rows.append(r)
            cols.append(c)
            depths.append(d)
            if with_labels:
                if rec[3] not in _VALID_LABELS:
                    raise FormatError(f"{path}:{lineno}: unknown label {rec[3]!r}")
                labels.append(rec[3])
    pts = SparsePointSet.build(np.array(rows, dtype=np.int64),
                               np.array(cols, dtype=np.int64),
                               np.array(depths), source_height, source_width)
    # reorder labels to match the row-major sort
    lab = None
    if with_labels:
        key = np.array(rows, dtype=np.int64) * source_width + np.array(cols, dtype=np.int64)
        lab = np.array(labels, dtype=object)[np.argsort(key, kind="stable")]
    return pts, lab


# -------------------------------------------------------------------- reports

def write_report(record: dict, path) -> None:
    """Flat key=value text record, insertion-ordered, byte-stable."""
    lines = []
    for k, v in record.items():
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k}={v}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> dict:
    record = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        record[k] = v
    return record


# ------------------------------------------------------------------- colorize

def _load_lut() -> np.ndarray:
    ref = importlib.resources.files("dtofkit").joinpath("data/colormap.csv")
    rows = [line.split(",") for line in ref.read_text().strip().splitlines()]
    lut = np.array(rows, dtype=np.uint8)
    if lut.shape != (256, 3):
        raise FormatError(f"colormap asset has shape {lut.shape}, expected (256, 3)")
    return lut


def colorize(depth: DenseDepthMap, d_min: float, d_max: float, path) -> None:
    """Render a depth map through the shipped 256-entry lookup table.
    Invalid pixels are black; output bytes are deterministic."""
    if d_min >= d_max:
        raise DataError(f"colorize range must satisfy min < max, got [{d_min}, {d_max}]")
    lut = _load_lut()
    norm = (depth.values - d_min) / (d_max - d_min)
    idx = np.clip(np.round(norm * 255), 0, 255).astype(np.uint8)
    rgb = lut[idx]
    rgb[~depth.valid] = 0
    Image.fromarray(rgb).save(Path(path), format="PNG")


# ----------------------------------------------------------------- run config

@dataclass(frozen=True)
class RunConfig:
    """Serializable run configuration: sensor, simulation and detector
    settings plus completion options."""

    sensor: SensorSpec = field(default_factory=SensorSpec)
    sim: SimConfig = None
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    fit_domain: str = "inverse"
    robust: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.sim is None:
            object.__setattr__(self, "sim", SimConfig(spec=self.sensor, seed=self.seed))

    def to_dict(self) -> dict:
        d = {
            "sensor": asdict(self.sensor),
            "sim": {k: v for k, v in asdict(self.sim).items() if k != "spec"},
            "detector": asdict(self.detector),
            "fit_domain": self.fit_domain,
            "robust": self.robust,
            "seed": self.seed,
        }
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known_top = {"sensor", "sim", "detector", "fit_domain", "robust", "seed"}
        _reject_unknown(data, known_top, "config")
        seed = int(data.get("seed", 0))
        sensor = _build(SensorSpec, data.get("sensor", {}), "sensor")
        sim_data = dict(data.get("sim", {}))
        sim_data.pop("spec", None)
        sim_data.setdefault("seed", seed)
        sim_kwargs = _checked(SimConfig, sim_data, "sim")
        sim_kwargs["region_count_range"] = tuple(sim_kwargs.get("region_count_range", (1, 3)))
        sim_kwargs["region_area_range"] = tuple(sim_kwargs.get("region_area_range", (0.02, 0.15)))
        sim = SimConfig(spec=sensor, **sim_kwargs)
        detector = _build(DetectorConfig, data.get("detector", {}), "detector")
        return cls(sensor=sensor, sim=sim, detector=detector,
                   fit_domain=data.get("fit_domain", "inverse"),
                   robust=bool(data.get("robust", False)), seed=seed)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON: {e}") from None
        return cls.from_dict(data)


def _reject_unknown(data: dict, known: set, where: str) -> None:
    unknown = sorted(set(data) - known)
    if unknown:
        raise FormatError(f"unknown {where} keys: {', '.join(unknown)}")


def _checked(cls, data: dict, where: str) -> dict:
    names = {f.name for f in fields(cls)} - {"spec"}
    _reject_unknown(data, names, where)
    return dict(data)


def _build(cls, data: dict, where: str):
    return cls(**_checked(cls, data, where))
