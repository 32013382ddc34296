#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
直方图分箱
Freedman–Diaconis 分箱数、随机切分与分箱标签
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from app.errors import DataError, NumericalError
from app.simulate.simulate_rng import make_stream, open_uniform

# 支撑区间在观测范围两侧各外扩的比例
SUPPORT_MARGIN = 0.05
# 向下取整前的容差，抵消立方根的舍入误差
_FLOOR_EPS = 1e-9


def freedman_diaconis(value_range: float, n: int, iqr: float) -> int:
    """M = ⌊range·n^(1/3) / (2·IQR)⌋，至少为 1"""
    if not iqr > 0:
        raise DataError(f"四分位距必须为正，当前为 {iqr}")
    m = np.floor(value_range * np.cbrt(n) / (2.0 * iqr) + _FLOOR_EPS)
    return max(1, int(m))


def fd_bin_count(z) -> int:
    """按 Freedman–Diaconis 规则由观测值确定切分点个数 M"""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape[0] < 4:
        raise DataError(f"Freedman–Diaconis 规则至少需要 4 个观测，当前为 {z.shape[0]}")
    q75, q25 = np.percentile(z, [75, 25])
    if not q75 > q25:
        raise DataError("观测值的四分位距为 0，无法确定分箱数")
    return freedman_diaconis(float(z.max() - z.min()), z.shape[0], float(q75 - q25))


def support_of(z) -> Tuple[float, float]:
    """[min z - 0.05·range, max z + 0.05·range]"""
    z = np.asarray(z, dtype=np.float64)
    lo, hi = float(z.min()), float(z.max())
    if not hi > lo:
        raise DataError("观测值全部相同，无法确定支撑区间")
    pad = SUPPORT_MARGIN * (hi - lo)
    return lo - pad, hi + pad


@dataclass(frozen=True)
class BinPartition:
    """
    支撑区间 [lower, upper] 上的 M 个切分点，对应 M+1 个分箱
    内部分箱左闭右开，最后一个分箱右闭
    """

    lower: float
    upper: float
    cuts: np.ndarray

    def __post_init__(self):
        cuts = np.asarray(self.cuts, dtype=np.float64).reshape(-1)
        if not self.upper > self.lower:
            raise DataError(f"支撑区间非法: [{self.lower}, {self.upper}]")
        if cuts.size == 0:
            raise DataError("至少需要 1 个切分点")
        if np.any(np.diff(cuts) <= 0):
            raise DataError("切分点必须严格递增")
        if cuts[0] <= self.lower or cuts[-1] >= self.upper:
            raise DataError("切分点必须位于支撑区间内部")
        cuts.setflags(write=False)
        object.__setattr__(self, "cuts", cuts)

    @property
    def n_cuts(self) -> int:
        return self.cuts.shape[0]

    @property
    def n_bins(self) -> int:
        return self.cuts.shape[0] + 1

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[self.lower], self.cuts, [self.upper]])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def random_partition(m: int, lower: float, upper: float, seed: int, index: int = 0) -> BinPartition:
    """
    在 (0,1) 上抽 M 个均匀数，排序后仿射映射到 (lower, upper)

    Args:
        m: 切分点个数
        lower, upper: 支撑区间
        seed: 主种子
        index: 集成成员序号
    """
    if m < 1:
        raise DataError(f"切分点个数必须 >= 1，当前为 {m}")
    if not upper > lower:
        raise DataError(f"支撑区间非法: [{lower}, {upper}]")
    u = np.sort(open_uniform(make_stream(seed, "partition", index), m))
    cuts = lower + u * (upper - lower)
    if np.any(np.diff(cuts) <= 0):
        raise NumericalError(f"随机切分出现重合切分点 (seed={seed}, index={index})")
    return BinPartition(float(lower), float(upper), cuts)


def assign_bins(z, partition: BinPartition) -> np.ndarray:
    """观测值所在分箱的标签 0..M；恰在切分点上的值归入右侧分箱"""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    outside = (z < partition.lower) | (z > partition.upper)
    if np.any(outside):
        raise DataError(f"观测值 {z[outside][0]} 超出支撑区间", row=int(np.flatnonzero(outside)[0]))
    return np.searchsorted(partition.cuts, z, side="right").astype(np.int64)
