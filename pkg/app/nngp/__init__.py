"""
NNGP 协方差模块
"""

from .nngp_kernel import (
    ACTIVATIONS, NearfieldReport, NNGPConfig, arc_cosine_step, c0, induced_cov,
    nearfield_form_check,
)

__all__ = [
    "ACTIVATIONS", "NearfieldReport", "NNGPConfig", "arc_cosine_step", "c0", "induced_cov",
    "nearfield_form_check",
]
