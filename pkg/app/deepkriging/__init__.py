"""
DeepKriging 模块
"""

from .deepkriging_model import (
    FEATURES, SIM1D_CONFIG, SIM2D_CONFIG, TASKS, DeepKriging, DeepKrigingConfig,
    baseline_dnn, build_default, classify_threshold, default_layers,
)
from .deepkriging_probe import PROBE_EPOCHS, ProbeResult, affine_residual, nonlinearity_probe

__all__ = [
    "FEATURES", "SIM1D_CONFIG", "SIM2D_CONFIG", "TASKS", "DeepKriging", "DeepKrigingConfig",
    "baseline_dnn", "build_default", "classify_threshold", "default_layers",
    "PROBE_EPOCHS", "ProbeResult", "affine_residual", "nonlinearity_probe",
]
