"""
深度分布空间预测模块
"""

from .ddsp_bins import (
    BinPartition, assign_bins, fd_bin_count, freedman_diaconis, random_partition, support_of,
)
from .ddsp_density import (
    DEFAULT_LEVELS, AqtlResult, DensityEstimate, aqtl, default_member, density_query,
    ensemble_density,
)

__all__ = [
    "BinPartition", "assign_bins", "fd_bin_count", "freedman_diaconis", "random_partition",
    "support_of",
    "DEFAULT_LEVELS", "AqtlResult", "DensityEstimate", "aqtl", "default_member", "density_query",
    "ensemble_density",
]
