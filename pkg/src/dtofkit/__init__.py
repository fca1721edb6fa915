"""dtofkit: lightweight dToF sparse-depth simulation, point anomaly
detection, affine completion and evaluation."""

from .core import (DenseDepthMap, DepthPoint, RelativeDepthMap, SensorSpec,
                   SparsePointSet, normalize_coords, pair_points)
from .simulate import SimConfig, SimOutput, simulate
from .anomaly import AnomalyResult, DetectorConfig, detect, mask_points
from .align import AffineFit, complete, complete_with_residuals, fit_affine
from .metrics import EvalReport, detector_prf, evaluate, ewmae

__all__ = [
    "DenseDepthMap", "DepthPoint", "RelativeDepthMap", "SensorSpec",
    "SparsePointSet", "normalize_coords", "pair_points",
    "SimConfig", "SimOutput", "simulate",
    "AnomalyResult", "DetectorConfig", "detect", "mask_points",
    "AffineFit", "complete", "complete_with_residuals", "fit_affine",
    "EvalReport", "detector_prf", "evaluate", "ewmae",
]

__version__ = "0.1.0"
