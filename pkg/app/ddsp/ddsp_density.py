#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
深度分布空间预测 (DDSP)
随机切分集成 + JBCE 训练的分箱分类器，给出每个位置的预测密度、CDF 与分位数
"""

import logging
from dataclasses import dataclass, replace
from functools import partial
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from app.deepkriging.deepkriging_model import DeepKriging, DeepKrigingConfig
from app.errors import DataError, DeepKrigingError, NumericalError
from app.spatial.spatial_data import SpatialDataset

from .ddsp_bins import BinPartition, assign_bins, fd_bin_count, random_partition, support_of

logger = logging.getLogger(__name__)

# 概率行和容差
SIMPLEX_TOLERANCE = 1e-6
# 分位水平 0.01..0.99
DEFAULT_LEVELS = np.arange(1, 100) / 100.0
DEFAULT_ENSEMBLE_SIZE = 10


@dataclass(frozen=True)
class DensityEstimate:
    """
    集成密度估计：每个成员一个切分及其在各位置上的分箱概率，
    密度为各成员直方图密度的平均
    """

    partitions: Tuple[BinPartition, ...]
    probabilities: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.partitions or len(self.partitions) != len(self.probabilities):
            raise DataError("集成成员的切分与概率个数不一致")
        first = self.partitions[0]
        n_loc = self.probabilities[0].shape[0]
        for i, (part, probs) in enumerate(zip(self.partitions, self.probabilities)):
            if (part.lower, part.upper) != (first.lower, first.upper):
                raise DataError(f"集成成员 {i} 的支撑区间与其他成员不同")
            if probs.shape != (n_loc, part.n_bins):
                raise DataError(f"集成成员 {i} 的概率矩阵形状 {probs.shape} 非法")
            if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > SIMPLEX_TOLERANCE):
                raise DataError(f"集成成员 {i} 的分箱概率不是合法的概率向量")

    @property
    def ensemble_size(self) -> int:
        return len(self.partitions)

    @property
    def n_locations(self) -> int:
        return self.probabilities[0].shape[0]

    @property
    def lower(self) -> float:
        return self.partitions[0].lower

    @property
    def upper(self) -> float:
        return self.partitions[0].upper

    def _values(self, index: int, y) -> np.ndarray:
        if not 0 <= index < self.n_locations:
            raise DataError(f"位置下标 {index} 超出范围 [0, {self.n_locations})")
        y = np.atleast_1d(np.asarray(y, dtype=np.float64))
        if np.any(y < self.lower) or np.any(y > self.upper):
            raise DataError(f"取值超出支撑区间 [{self.lower:.6g}, {self.upper:.6g}]")
        return y

    def pdf(self, index: int, y) -> np.ndarray:
        """成员直方图密度的平均（阶梯函数）"""
        y = self._values(index, y)
        total = np.zeros_like(y)
        for part, probs in zip(self.partitions, self.probabilities):
            bins = np.searchsorted(part.cuts, y, side="right")
            total += probs[index, bins] / part.widths[bins]
        return total / self.ensemble_size

    def cdf(self, index: int, y) -> np.ndarray:
        """密度的积分，连续、分段线性、单调不减"""
        y = self._values(index, y)
        total = np.zeros_like(y)
        for part, probs in zip(self.partitions, self.probabilities):
            p = probs[index]
            bins = np.searchsorted(part.cuts, y, side="right")
            before = np.concatenate([[0.0], np.cumsum(p)])[bins]
            frac = (y - part.edges[bins]) / part.widths[bins]
            total += before + p[bins] * frac
        return np.clip(total / self.ensemble_size, 0.0, 1.0)

    def knots(self) -> np.ndarray:
        """所有成员分箱边界的并集；CDF 在相邻节点之间是线性的"""
        return np.unique(np.concatenate([part.edges for part in self.partitions]))

    def quantile(self, index: int, t) -> np.ndarray:
        """CDF 的广义逆 inf{y : F(y) >= t}"""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if np.any(t <= 0) or np.any(t >= 1):
            raise DataError("分位水平必须在 (0, 1) 内")
        knots = self.knots()
        c = self.cdf(index, knots)
        idx = np.clip(np.searchsorted(c, t, side="left"), 1, len(knots) - 1)
        c0, c1 = c[idx - 1], c[idx]
        k0, k1 = knots[idx - 1], knots[idx]
        step = np.where(c1 > c0, c1 - c0, 1.0)
        return k0 + np.clip((t - c0) / step, 0.0, 1.0) * (k1 - k0)

    def quantile_table(self, levels: Sequence[float] = DEFAULT_LEVELS) -> np.ndarray:
        """n_locations × len(levels) 的分位数表"""
        return np.vstack([self.quantile(i, levels) for i in range(self.n_locations)])

    def pdf_grid(self, n_points: int = 200) -> Tuple[np.ndarray, np.ndarray]:
        """支撑区间等距网格上的密度，返回 (网格, n_locations × n_points)"""
        grid = np.linspace(self.lower, self.upper, n_points)
        return grid, np.vstack([self.pdf(i, grid) for i in range(self.n_locations)])

    def mean(self) -> np.ndarray:
        """各位置预测分布的均值（分箱中点加权）"""
        total = np.zeros(self.n_locations)
        for part, probs in zip(self.partitions, self.probabilities):
            mid = 0.5 * (part.edges[:-1] + part.edges[1:])
            total += probs @ mid
        return total / self.ensemble_size

    def exceedance(self, threshold: float) -> np.ndarray:
        """各位置 P{Y > threshold}"""
        threshold = float(np.clip(threshold, self.lower, self.upper))
        return np.array([1.0 - self.cdf(i, threshold)[0] for i in range(self.n_locations)])

    def total_variation(self, index: int, n_points: int = 512) -> float:
        """密度在等距网格上相邻点差的绝对值之和"""
        grid = np.linspace(self.lower, self.upper, n_points)
        return float(np.sum(np.abs(np.diff(self.pdf(index, grid)))))

    def max_jump(self, index: int, n_points: int = 512) -> float:
        grid = np.linspace(self.lower, self.upper, n_points)
        return float(np.max(np.abs(np.diff(self.pdf(index, grid)))))


def density_query(estimate: DensityEstimate, index: int, kind: str, value) -> np.ndarray:
    """按 kind ("pdf"、"cdf"、"quantile") 查询某个位置"""
    queries = {"pdf": estimate.pdf, "cdf": estimate.cdf, "quantile": estimate.quantile}
    if kind not in queries:
        raise DataError(f"未知的查询类型: {kind}，可选 {', '.join(queries)}")
    return queries[kind](index, value)


def default_member(index: int, partition: BinPartition, config: DeepKrigingConfig) -> DeepKriging:
    """默认成员：(M+1) 路 softmax 输出、JBCE 损失的 DeepKriging 分类器"""
    member_config = replace(config, seed=config.seed + index, progress=False)
    return DeepKriging("distribution", partition.n_bins, member_config, name=f"ddsp-{index}")


def _fit_member(args) -> np.ndarray:
    factory, index, partition, train, test_locations, test_covariates = args
    labels = assign_bins(train.responses, partition)
    try:
        member = factory(index, partition)
        member.fit(train, labels)
        return np.asarray(member.predict(test_locations, test_covariates), dtype=np.float64)
    except DeepKrigingError as e:
        raise NumericalError(f"集成成员 {index} 训练失败: {e}") from e


def ensemble_density(train: SpatialDataset, test_locations: np.ndarray,
                     test_covariates: Optional[np.ndarray] = None,
                     ensemble_size: int = DEFAULT_ENSEMBLE_SIZE,
                     n_cuts: Optional[int] = None,
                     config: DeepKrigingConfig = DeepKrigingConfig(),
                     seed: int = 0,
                     member_factory: Optional[Callable] = None,
                     map_fn: Callable = map) -> DensityEstimate:
    """
    随机切分集成的密度估计

    Args:
        train: 训练数据集
        test_locations: 需要预测分布的位置
        test_covariates: 这些位置的协变量
        ensemble_size: 集成成员数 I
        n_cuts: 切分点个数 M；为 None 时按 Freedman–Diaconis 规则
        config: 成员网络设置
        seed: 切分的主种子，成员 i 使用第 i 个切分流
        member_factory: (序号, 切分) -> 具有 fit(train, labels) 与 predict 的对象
        map_fn: 映射函数，可传入进程池的 map 以并行

    Returns:
        DensityEstimate
    """
    if ensemble_size < 1:
        raise DataError(f"集成成员数必须 >= 1，当前为 {ensemble_size}")
    lower, upper = support_of(train.responses)
    m = fd_bin_count(train.responses) if n_cuts is None else int(n_cuts)
    factory = member_factory or partial(default_member, config=config)
    partitions = [random_partition(m, lower, upper, seed, i) for i in range(ensemble_size)]
    logger.info(f"DDSP 集成: I={ensemble_size}, M={m}, 支撑区间 [{lower:.4g}, {upper:.4g}]")
    tasks = [(factory, i, part, train, test_locations, test_covariates)
             for i, part in enumerate(partitions)]
    probabilities = tuple(map_fn(_fit_member, tasks))
    return DensityEstimate(tuple(partitions), probabilities)


@dataclass(frozen=True)
class AqtlResult:
    raw: float
    per_observation: float


def aqtl(quantiles: np.ndarray, z, levels: Sequence[float] = DEFAULT_LEVELS) -> AqtlResult:
    """
    平均分位损失：Σ_t Σ_n (z_n − Q_n(t))·(t − 1{z_n ≤ Q_n(t)})

    Args:
        quantiles: n × T 分位数矩阵，第 k 列对应 levels[k]
        z: 长度 n 的观测值
        levels: 分位水平

    Returns:
        AqtlResult(总和, 按观测数平均)
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    levels = np.asarray(levels, dtype=np.float64).reshape(-1)
    quantiles = np.asarray(quantiles, dtype=np.float64).reshape(z.shape[0], levels.shape[0])
    diff = z[:, None] - quantiles
    loss = diff * (levels[None, :] - (diff <= 0))
    raw = float(loss.sum())
    return AqtlResult(raw, raw / z.shape[0])
