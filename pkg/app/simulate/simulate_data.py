#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
模拟数据模块
一维平稳高斯过程、二维非平稳确定性曲面、一维异方差高斯混合与非线性探针设计
"""

import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Tuple

import numpy as np

from app.covariance.covariance_model import CovarianceModel, gram
from app.errors import DataError, DataIOError
from app.spatial.spatial_data import SpatialDataset, save_csv

from .simulate_rng import make_stream, standard_normal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """模拟设置；各生成器只读取与自己相关的字段"""

    n: int = 1000
    seed: int = 0
    # 一维高斯过程
    mu: float = 1.0
    sigma2: float = 1.0
    rho: float = 0.1
    tau2: float = 0.01
    # 高斯混合
    tau1_sd: float = 0.2
    tau2_sd: float = 0.3
    mix_prob: float = 0.5
    # 非线性探针
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise DataError(f"模拟样本数至少为 2，当前为 {self.n}")
        positive = {"sigma2": self.sigma2, "rho": self.rho, "tau1_sd": self.tau1_sd,
                    "tau2_sd": self.tau2_sd, "noise_sd": self.noise_sd}
        for key, value in positive.items():
            if not value > 0:
                raise DataError(f"模拟参数 {key} 必须为正，当前为 {value}")
        if self.tau2 < 0:
            raise DataError(f"块金方差不能为负，当前为 {self.tau2}")
        if not 0.0 <= self.mix_prob <= 1.0:
            raise DataError(f"混合概率必须在 [0, 1] 内，当前为 {self.mix_prob}")

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, seed=seed)


def sample_gp_1d(config: SimConfig = SimConfig()) -> SpatialDataset:
    """
    [0,1] 上等距位置的平稳高斯过程 z = μ + Lξ + √τ²·ε

    L 来自不含块金的指数协方差 Gram 矩阵；ξ、ε 分别使用独立的命名流。
    """
    locations = np.linspace(0.0, 1.0, config.n)[:, None]
    model = CovarianceModel("exponential", config.sigma2, config.rho, 0.0)
    factor = gram(locations, model)
    xi = standard_normal(make_stream(config.seed, "gp"), config.n)
    eps = standard_normal(make_stream(config.seed, "noise"), config.n)
    z = config.mu + factor.lower @ xi + np.sqrt(config.tau2) * eps
    return SpatialDataset(locations, z)


def nonstat_surface(locations: np.ndarray) -> np.ndarray:
    """Y(s) = sin{30(s̄-0.9)^4}cos{2(s̄-0.9)} + (s̄-0.9)/2，s̄ 为两坐标均值"""
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    centered = locations.mean(axis=1) - 0.9
    return np.sin(30.0 * centered ** 4) * np.cos(2.0 * centered) + centered / 2.0


def nonstat_2d(side: int = 30) -> SpatialDataset:
    """[0,1]² 上 side×side 格点的非平稳无噪曲面"""
    if side < 2:
        raise DataError(f"格点边长至少为 2，当前为 {side}")
    axis = np.linspace(0.0, 1.0, side)
    sx, sy = np.meshgrid(axis, axis, indexing="ij")
    locations = np.stack([sx.reshape(-1), sy.reshape(-1)], axis=1)
    return SpatialDataset(locations, nonstat_surface(locations))


def gaussian_mixture_1d(config: SimConfig = SimConfig(n=2500),
                        return_flags: bool = False):
    """
    一维异方差高斯混合
    z(s) = {sin(5s)+0.7+τ₁}π + {2sin(8s)+τ₂}(1-π)，π ~ Bernoulli(mix_prob)

    Args:
        config: 模拟设置
        return_flags: 是否同时返回每个位置的 π

    Returns:
        SpatialDataset，或 (SpatialDataset, π 数组)
    """
    s = np.linspace(0.0, 1.0, config.n)
    flags = make_stream(config.seed, "mixture").random(config.n) < config.mix_prob
    tau1 = config.tau1_sd * standard_normal(make_stream(config.seed, "noise1"), config.n)
    tau2 = config.tau2_sd * standard_normal(make_stream(config.seed, "noise2"), config.n)
    pi = flags.astype(np.float64)
    z = (np.sin(5.0 * s) + 0.7 + tau1) * pi + (2.0 * np.sin(8.0 * s) + tau2) * (1.0 - pi)
    dataset = SpatialDataset(s[:, None], z)
    return (dataset, flags) if return_flags else dataset


def probe_signal(s: np.ndarray) -> np.ndarray:
    """Y(s) = 10cos(20s)"""
    return 10.0 * np.cos(20.0 * np.asarray(s, dtype=np.float64))


def sample_probe_1d(config: SimConfig = SimConfig(n=100)) -> SpatialDataset:
    """
    非线性探针与计时实验的设计：z = Y·1{Y>0} + ε，ε ~ N(0, noise_sd²)
    """
    s = np.linspace(0.0, 1.0, config.n)
    y = probe_signal(s)
    eps = config.noise_sd * standard_normal(make_stream(config.seed, "probe"), config.n)
    return SpatialDataset(s[:, None], y * (y > 0) + eps)


def train_test_split(n: int, n_train: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    无放回均匀抽取 n_train 个训练下标，其余为测试

    Returns:
        (升序训练下标, 升序测试下标)
    """
    if not 1 <= n_train < n:
        raise DataError(f"训练样本数 {n_train} 必须在 [1, {n}) 内")
    chosen = make_stream(seed, "split").choice(n, size=n_train, replace=False)
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    return np.flatnonzero(mask), np.flatnonzero(~mask)


def write_simulation(path, dataset: SpatialDataset, config, generator: str) -> Path:
    """写出模拟数据 CSV，并在旁边写同名 .json 记录设置与种子"""
    path = Path(path)
    save_csv(path, dataset)
    sidecar = path.with_suffix(".json")
    payload = {"generator": generator,
               "config": asdict(config) if hasattr(config, "__dataclass_fields__") else config}
    try:
        sidecar.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"无法写入 {sidecar}: {e}") from e
    logger.info(f"模拟数据已写出: {path}")
    return path
